use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use vcsplat_cli::{cmd_ablate, cmd_bench_tiles, cmd_eval, cmd_render, cmd_synth, cmd_train, with_workers, Overrides};
use vcsplat_core::io::SynthSpec;

#[derive(Parser)]
#[command(name = "vcsplat", version, about = "CPU Gaussian splatting with multi-view consistent density control")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory with cameras.json, images/ and points3d.ply.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    tau_d: Option<f64>,
    #[arg(long)]
    tau_p: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    /// Train and render in double precision.
    #[arg(long)]
    float64: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        views: usize,
        #[arg(long, default_value_t = 500)]
        gaussians: usize,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a scene and write checkpoint, log, metrics and test renders.
    Train {
        #[command(flatten)]
        args: TrainArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also plot the Gaussian count over iterations.
        #[arg(long)]
        plot: bool,
    },
    /// Render a checkpoint from every camera in a cameras.json.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        /// cameras.json or a dataset directory containing one.
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        float64: bool,
    },
    /// PSNR and SSIM of a checkpoint on the dataset's test views, as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        float64: bool,
    },
    /// Tile pair counts and render time for several compact-box scales.
    BenchTiles {
        #[arg(long)]
        data: PathBuf,
        /// Scene to render; defaults to gt.ply in the dataset directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75,1.0")]
        betas: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the baseline, each component alone and the full method.
    Ablate {
        #[command(flatten)]
        args: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

impl TrainArgs {
    fn overrides(&self, workers: usize) -> Overrides {
        Overrides {
            seed: self.seed,
            beta: self.beta,
            tau: self.tau,
            tau_d: self.tau_d,
            tau_p: self.tau_p,
            iters: self.iters,
            float64: self.float64,
            workers: Some(workers),
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let workers = cli.workers;
    match cli.command {
        Command::Synth {
            out,
            views,
            gaussians,
            size,
            seed,
        } => {
            let spec = SynthSpec {
                n_views: views,
                n_gaussians: gaussians,
                width: size,
                height: size,
                seed,
                ..SynthSpec::default()
            };
            with_workers(workers, || cmd_synth(&spec, &out))??;
            println!("wrote {}", out.display());
        }
        Command::Train { args, out, plot } => {
            let report = cmd_train(&args.data, args.config.as_deref(), &out, &args.overrides(workers), plot)?;
            println!(
                "{} gaussians, test PSNR {:.2} dB, SSIM {:.4}, {:.1} s",
                report.metrics.gaussian_count, report.metrics.mean_psnr, report.metrics.mean_ssim, report.wall_time_s
            );
        }
        Command::Render {
            checkpoint,
            cameras,
            out,
            float64,
        } => {
            let files = with_workers(workers, || cmd_render(&checkpoint, &cameras, &out, float64))??;
            println!("wrote {} images to {}", files.len(), out.display());
        }
        Command::Eval {
            checkpoint,
            data,
            float64,
        } => {
            let m = with_workers(workers, || cmd_eval(&checkpoint, &data, float64))??;
            println!("{}", serde_json::to_string_pretty(&m)?);
        }
        Command::BenchTiles {
            data,
            checkpoint,
            betas,
            out,
        } => {
            let rows = with_workers(workers, || cmd_bench_tiles(&data, checkpoint.as_deref(), &betas, &out))??;
            for r in rows {
                println!(
                    "{:8} beta={:<5} pairs={:<9} {:8.1} ms  diff={:.2e}",
                    r.binning,
                    r.beta.map_or("-".to_string(), |b| b.to_string()),
                    r.pairs,
                    r.render_ms,
                    r.mean_abs_diff
                );
            }
        }
        Command::Ablate { args, out } => {
            let rows = cmd_ablate(&args.data, args.config.as_deref(), &out, &args.overrides(workers))?;
            for r in rows {
                println!(
                    "{:9} {:8.1} s  PSNR {:6.2}  SSIM {:.4}  {} gaussians",
                    r.name, r.time_s, r.psnr, r.ssim, r.gaussians
                );
            }
        }
    }
    Ok(())
}

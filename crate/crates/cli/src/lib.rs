//! Commands behind the `vcsplat` binary, usable as a library so tests can
//! drive them without spawning processes.

pub mod plot;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use vcsplat_core::config::BinningMode;
use vcsplat_core::io::dataset::{read_cameras, Dataset};
use vcsplat_core::io::{generate_synthetic, load_checkpoint, load_dataset, save_checkpoint, save_png, SynthSpec};
use vcsplat_core::raster::DEFAULT_TILE_SIZE;
use vcsplat_core::render::{render, RenderSettings};
use vcsplat_core::scene::init_from_points;
use vcsplat_core::train::{evaluate_views, write_log_file};
use vcsplat_core::{run_training, Binning, Image, Scene, TrainConfig, TrainResult};

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub beta: Option<f64>,
    pub tau: Option<f64>,
    pub tau_d: Option<f64>,
    pub tau_p: Option<f64>,
    pub iters: Option<usize>,
    pub float64: bool,
    pub workers: Option<usize>,
}

pub fn resolve_config(config: Option<&Path>, o: &Overrides) -> Result<TrainConfig> {
    let mut cfg = match config {
        Some(p) => TrainConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.beta {
        cfg.beta = v;
    }
    if let Some(v) = o.tau {
        cfg.tau = v;
    }
    if let Some(v) = o.tau_d {
        cfg.tau_d = v;
    }
    if let Some(v) = o.tau_p {
        cfg.tau_p = v;
    }
    if let Some(v) = o.iters {
        cfg.iterations = v;
    }
    if let Some(v) = o.workers {
        cfg.workers = v;
    }
    cfg.float64 |= o.float64;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs `f` on a rayon pool with `workers` threads (0 = rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(pool.install(f))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub view: usize,
    pub psnr: f64,
    pub ssim: f64,
}

/// Deterministic summary of a run. Wall time lives in a separate file so
/// reruns with the same seed produce identical bytes here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub iterations: usize,
    pub gaussian_count: usize,
    pub total_tile_pairs: u64,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub test_views: Vec<ViewMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_time_s: f64,
}

pub struct TrainReport {
    pub result: TrainResult,
    pub metrics: Metrics,
    pub wall_time_s: f64,
    pub files: Vec<PathBuf>,
}

fn settings_for(cfg: &TrainConfig, scene: &Scene) -> RenderSettings {
    RenderSettings::new(cfg.tile_size, cfg.binning(), scene.sh_degree)
}

/// Test-view metrics; errors when the split is empty.
pub fn evaluate(scene: &Scene, ds: &Dataset, s: &RenderSettings, float64: bool) -> Result<Vec<ViewMetrics>> {
    if ds.test.is_empty() {
        bail!("dataset has no test views to evaluate");
    }
    let per_view = if float64 {
        evaluate_views::<f64>(scene, ds, &ds.test, s)?
    } else {
        evaluate_views::<f32>(scene, ds, &ds.test, s)?
    };
    Ok(ds
        .test
        .iter()
        .zip(per_view)
        .map(|(&view, (psnr, ssim))| ViewMetrics { view, psnr, ssim })
        .collect())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Trains in memory and evaluates on the test split.
pub fn train_and_evaluate(ds: &Dataset, cfg: &TrainConfig) -> Result<(TrainResult, Metrics, f64)> {
    let start = Instant::now();
    let sh_degree = cfg.sh_degree;
    let init = init_from_points(&ds.init_points, sh_degree)?;
    let result = run_training(init, ds, cfg, &mut ())?;
    let wall = start.elapsed().as_secs_f64();
    let views = if ds.test.is_empty() {
        Vec::new()
    } else {
        evaluate(&result.scene, ds, &settings_for(cfg, &result.scene), cfg.float64)?
    };
    let metrics = Metrics {
        iterations: cfg.iterations,
        gaussian_count: result.scene.len(),
        total_tile_pairs: result.log.iter().map(|r| r.tile_pairs as u64).sum(),
        mean_psnr: mean(views.iter().map(|v| v.psnr)),
        mean_ssim: mean(views.iter().map(|v| v.ssim)),
        test_views: views,
    };
    Ok((result, metrics, wall))
}

pub fn render_scene_views(scene: &Scene, ds_cams: &[vcsplat_core::Camera], views: &[usize], s: &RenderSettings, float64: bool) -> Result<Vec<Image<f32>>> {
    views
        .iter()
        .map(|&v| {
            let cam = &ds_cams[v];
            Ok(if float64 {
                render::<f64>(scene, cam, s)?.image().cast()
            } else {
                render::<f32>(scene, cam, s)?.out.image
            })
        })
        .collect()
}

pub fn cmd_train(data: &Path, config: Option<&Path>, out: &Path, o: &Overrides, plot: bool) -> Result<TrainReport> {
    let cfg = resolve_config(config, o)?;
    let ds = load_dataset(data).with_context(|| format!("loading dataset {}", data.display()))?;
    std::fs::create_dir_all(out)?;
    let (result, metrics, wall) = with_workers(cfg.workers, || train_and_evaluate(&ds, &cfg))??;

    let mut files = Vec::new();
    let ckpt = out.join("checkpoint.ply");
    save_checkpoint(&result.scene, &ckpt)?;
    files.push(ckpt);
    let log = out.join("log.csv");
    write_log_file(&result.log, &log)?;
    files.push(log);
    let renders = out.join("renders");
    std::fs::create_dir_all(&renders)?;
    let s = settings_for(&cfg, &result.scene);
    for (img, &v) in render_scene_views(&result.scene, &ds.cameras, &ds.test, &s, cfg.float64)?
        .iter()
        .zip(&ds.test)
    {
        let p = renders.join(format!("test_{v:03}.png"));
        save_png(img, &p)?;
        files.push(p);
    }
    let m = out.join("metrics.json");
    write_json(&metrics, &m)?;
    files.push(m);
    let t = out.join("timing.json");
    write_json(&Timing { wall_time_s: wall }, &t)?;
    files.push(t);
    if plot {
        let p = out.join("gaussian_count.png");
        let series: Vec<(f64, f64)> = result
            .log
            .iter()
            .map(|r| (r.iteration as f64, r.gaussian_count as f64))
            .collect();
        plot::line_chart(&[series], 640, 360, &p)?;
        files.push(p);
    }
    Ok(TrainReport {
        result,
        metrics,
        wall_time_s: wall,
        files,
    })
}

/// Cameras from either a dataset directory or a `cameras.json` file.
fn load_cameras(path: &Path) -> Result<Vec<vcsplat_core::Camera>> {
    let file = if path.is_dir() { path.join("cameras.json") } else { path.to_path_buf() };
    let records = read_cameras(&file)?;
    records.iter().map(|r| r.to_camera().map_err(anyhow::Error::msg)).collect::<Result<_>>()
}

pub fn cmd_render(checkpoint: &Path, cameras: &Path, out: &Path, float64: bool) -> Result<Vec<PathBuf>> {
    let scene = load_checkpoint(checkpoint)?;
    let cams = load_cameras(cameras)?;
    std::fs::create_dir_all(out)?;
    let s = RenderSettings::new(DEFAULT_TILE_SIZE, Binning::Aabb, scene.sh_degree);
    let views: Vec<usize> = (0..cams.len()).collect();
    let mut files = Vec::new();
    for (i, img) in render_scene_views(&scene, &cams, &views, &s, float64)?.iter().enumerate() {
        let p = out.join(format!("{i:03}.png"));
        save_png(img, &p)?;
        files.push(p);
    }
    Ok(files)
}

pub fn cmd_eval(checkpoint: &Path, data: &Path, float64: bool) -> Result<Metrics> {
    let scene = load_checkpoint(checkpoint)?;
    let ds = load_dataset(data)?;
    let s = RenderSettings::new(DEFAULT_TILE_SIZE, Binning::Aabb, scene.sh_degree);
    let views = evaluate(&scene, &ds, &s, float64)?;
    Ok(Metrics {
        iterations: 0,
        gaussian_count: scene.len(),
        total_tile_pairs: 0,
        mean_psnr: mean(views.iter().map(|v| v.psnr)),
        mean_ssim: mean(views.iter().map(|v| v.ssim)),
        test_views: views,
    })
}

pub fn cmd_synth(spec: &SynthSpec, out: &Path) -> Result<()> {
    generate_synthetic(spec, Some(out))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileBenchRow {
    /// `aabb` or `compact`.
    pub binning: String,
    /// Empty for the 3-sigma box.
    pub beta: Option<f64>,
    pub pairs: u64,
    pub render_ms: f64,
    /// Mean absolute per-channel difference to the compact β = 1 render.
    pub mean_abs_diff: f64,
}

/// Pair counts, render time and image change of the compact box for each
/// β, plus a 3-sigma box row, over every view of the dataset.
pub fn bench_tiles(scene: &Scene, cams: &[vcsplat_core::Camera], betas: &[f64], tau_alpha: f64) -> Result<Vec<TileBenchRow>> {
    let reference_binning = Binning::Compact { beta: 1.0, tau_alpha };
    let render_all = |binning: Binning| -> Result<(Vec<Image<f32>>, u64, f64)> {
        let s = RenderSettings::new(DEFAULT_TILE_SIZE, binning, scene.sh_degree);
        let start = Instant::now();
        let mut pairs = 0u64;
        let mut images = Vec::with_capacity(cams.len());
        for cam in cams {
            let frame = render::<f32>(scene, cam, &s)?;
            pairs += frame.grid.num_pairs() as u64;
            images.push(frame.out.image);
        }
        Ok((images, pairs, start.elapsed().as_secs_f64() * 1e3))
    };
    let (reference, _, _) = render_all(reference_binning)?;
    let diff = |imgs: &[Image<f32>]| -> f64 {
        let total: f64 = imgs
            .iter()
            .zip(&reference)
            .flat_map(|(a, b)| a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs() as f64))
            .sum();
        let n: usize = imgs.iter().map(|i| i.data.len()).sum();
        total / n.max(1) as f64
    };
    let mut rows = Vec::new();
    let (imgs, pairs, ms) = render_all(Binning::Aabb)?;
    rows.push(TileBenchRow {
        binning: "aabb".into(),
        beta: None,
        pairs,
        render_ms: ms,
        mean_abs_diff: diff(&imgs),
    });
    for &beta in betas {
        let (imgs, pairs, ms) = render_all(Binning::Compact { beta, tau_alpha })?;
        rows.push(TileBenchRow {
            binning: "compact".into(),
            beta: Some(beta),
            pairs,
            render_ms: ms,
            mean_abs_diff: diff(&imgs),
        });
    }
    Ok(rows)
}

pub fn cmd_bench_tiles(data: &Path, checkpoint: Option<&Path>, betas: &[f64], out: &Path) -> Result<Vec<TileBenchRow>> {
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| data.join("gt.ply"));
    let scene = load_checkpoint(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let cams = load_cameras(data)?;
    let rows = bench_tiles(&scene, &cams, betas, TrainConfig::default().tau_alpha)?;
    write_csv(&rows, out)?;
    Ok(rows)
}

pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub time_s: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub gaussians: usize,
    pub tile_pairs: u64,
}

/// The four ablation configurations derived from `base`: gradient-only
/// density control, then each multi-view component, then everything.
pub fn ablation_configs(base: &TrainConfig) -> Vec<(&'static str, TrainConfig)> {
    let baseline = TrainConfig {
        use_vcd: false,
        use_vcp: false,
        abs_grad_split: false,
        binning: BinningMode::Aabb,
        ..base.clone()
    };
    vec![
        ("baseline", baseline.clone()),
        (
            "+vcd",
            TrainConfig {
                use_vcd: true,
                abs_grad_split: true,
                ..baseline.clone()
            },
        ),
        (
            "+vcp",
            TrainConfig {
                use_vcp: true,
                ..baseline.clone()
            },
        ),
        (
            "full",
            TrainConfig {
                use_vcd: true,
                use_vcp: true,
                abs_grad_split: true,
                binning: BinningMode::Compact,
                ..baseline
            },
        ),
    ]
}

pub fn run_ablation(ds: &Dataset, base: &TrainConfig) -> Result<Vec<AblationRow>> {
    ablation_configs(base)
        .into_iter()
        .map(|(name, cfg)| {
            let (_, m, wall) = train_and_evaluate(ds, &cfg)?;
            Ok(AblationRow {
                name: name.to_string(),
                time_s: wall,
                psnr: m.mean_psnr,
                ssim: m.mean_ssim,
                gaussians: m.gaussian_count,
                tile_pairs: m.total_tile_pairs,
            })
        })
        .collect()
}

pub fn cmd_ablate(data: &Path, config: Option<&Path>, out: &Path, o: &Overrides) -> Result<Vec<AblationRow>> {
    let cfg = resolve_config(config, o)?;
    let ds = load_dataset(data)?;
    let rows = with_workers(cfg.workers, || run_ablation(&ds, &cfg))??;
    std::fs::create_dir_all(out)?;
    write_csv(&rows, &out.join("ablation.csv"))?;
    Ok(rows)
}

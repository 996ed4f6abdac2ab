//! The training loop.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adc::{
    accumulate_scores, apply_densify, apply_prune, csv_err, sample_views, select_densify, select_prune, ScoreTable,
};
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::dataset::Dataset;
use crate::loss::{psnr, training_loss};
use crate::math::{logit, Real};
use crate::optim::{Adam, GroupRates};
use crate::render::{backward, render, RenderSettings};
use crate::scene::{ParamGroup, Scene};
use crate::schedule::{active_sh_degree, events_at, position_lr, sh_rest_steps_at, PruneRule};

/// Opacity ceiling applied by an opacity reset.
const RESET_OPACITY: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub loss: f64,
    /// PSNR of the view trained on this iteration.
    pub psnr: f64,
    pub gaussian_count: usize,
    pub tile_pairs: usize,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainEvent {
    Densify {
        iteration: usize,
        cloned: usize,
        split: usize,
    },
    Prune {
        iteration: usize,
        rule: PruneRule,
        removed: usize,
    },
    OpacityReset {
        iteration: usize,
    },
}

impl TrainEvent {
    pub fn iteration(&self) -> usize {
        match *self {
            TrainEvent::Densify { iteration, .. }
            | TrainEvent::Prune { iteration, .. }
            | TrainEvent::OpacityReset { iteration } => iteration,
        }
    }
}

/// Hooks called from inside the loop.
pub trait TrainObserver {
    fn on_iteration(&mut self, _row: &LogRow) {}
    fn on_event(&mut self, _event: &TrainEvent) {}
}

impl TrainObserver for () {}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub scene: Scene,
    pub log: Vec<LogRow>,
    pub events: Vec<TrainEvent>,
}

/// Trains `scene` on the dataset's training views.
pub fn run_training(scene: Scene, ds: &Dataset, cfg: &TrainConfig, obs: &mut dyn TrainObserver) -> Result<TrainResult> {
    if cfg.float64 {
        Trainer::<f64>::new(scene, ds, cfg, false)?.run(obs)
    } else {
        Trainer::<f32>::new(scene, ds, cfg, false)?.run(obs)
    }
}

/// Runs the full schedule with no-op gradients and no rendering: only the
/// event bookkeeping executes.
pub fn dry_run(scene: Scene, ds: &Dataset, cfg: &TrainConfig, obs: &mut dyn TrainObserver) -> Result<TrainResult> {
    Trainer::<f32>::new(scene, ds, cfg, true)?.run(obs)
}

struct Trainer<'a, F> {
    scene: Scene,
    ds: &'a Dataset,
    cfg: &'a TrainConfig,
    images: Vec<Image<F>>,
    extent: f64,
    adam: Adam,
    table: ScoreTable,
    /// Position change applied by the last optimizer step, per Gaussian.
    last_step: Vec<[f64; 3]>,
    /// SH-rest gradients held back by the lazy schedule.
    pending_rest: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    view_queue: Vec<usize>,
    dry: bool,
}

impl<'a, F: Real> Trainer<'a, F> {
    fn new(scene: Scene, ds: &'a Dataset, cfg: &'a TrainConfig, dry: bool) -> Result<Self> {
        cfg.validate()?;
        if ds.train.is_empty() {
            return Err(Error::Empty("training views"));
        }
        let n = scene.len();
        let images = if dry {
            Vec::new()
        } else {
            ds.images.iter().map(Image::cast).collect()
        };
        let rest = 3 * (crate::sh::num_sh_coeffs(scene.sh_degree) - 1);
        Ok(Self {
            adam: Adam::new(n, scene.sh_degree),
            table: ScoreTable::new(n),
            last_step: vec![[0.0; 3]; n],
            pending_rest: vec![vec![0.0; rest]; n],
            extent: ds.scene_extent(),
            scene,
            ds,
            cfg,
            images,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            view_queue: Vec::new(),
            dry,
        })
    }

    fn settings(&self, iteration: usize) -> RenderSettings {
        RenderSettings::new(
            self.cfg.tile_size,
            self.cfg.binning(),
            active_sh_degree(self.cfg, iteration, self.scene.sh_degree),
        )
    }

    /// Next training view; every view is visited once per shuffled pass.
    fn next_view(&mut self) -> usize {
        if self.view_queue.is_empty() {
            self.view_queue = self.ds.train.clone();
            self.view_queue.shuffle(&mut self.rng);
            self.view_queue.reverse();
        }
        self.view_queue.pop().expect("non-empty training set")
    }

    fn run(mut self, obs: &mut dyn TrainObserver) -> Result<TrainResult> {
        let start = Instant::now();
        let mut log = Vec::with_capacity(self.cfg.iterations);
        let mut events = Vec::new();
        for it in 1..=self.cfg.iterations {
            let (loss, train_psnr, pairs) = if self.dry { (0.0, 0.0, 0) } else { self.step(it)? };
            for ev in self.density_control(it)? {
                obs.on_event(&ev);
                events.push(ev);
            }
            let row = LogRow {
                iteration: it,
                loss,
                psnr: train_psnr,
                gaussian_count: self.scene.len(),
                tile_pairs: pairs,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            obs.on_iteration(&row);
            log.push(row);
        }
        if let Some(i) = self.scene.gaussians.iter().position(|g| !g.is_finite()) {
            return Err(Error::Internal(format!("gaussian {i} has non-finite parameters after training")));
        }
        Ok(TrainResult {
            scene: self.scene,
            log,
            events,
        })
    }

    /// One optimization step; returns loss, train-view PSNR and tile pairs.
    fn step(&mut self, it: usize) -> Result<(f64, f64, usize)> {
        let v = self.next_view();
        let cam = &self.ds.cameras[v];
        let settings = self.settings(it - 1);
        let frame = render::<F>(&self.scene, cam, &settings)?;
        let gt = &self.images[v];
        let (loss, d_img) = training_loss(frame.image(), gt, self.cfg.lambda)?;
        let train_psnr = psnr(frame.image(), gt)?;
        let mut grads = backward(&self.scene, cam, &settings, &frame, &d_img);
        self.table.add_view_gradients(&grads, cam.width, cam.height);

        let mut active = [true; 6];
        let rest = ParamGroup::ShRest.index();
        if self.cfg.lazy_opt_enabled {
            for (p, g) in self.pending_rest.iter_mut().zip(&grads.params) {
                for (a, b) in p.iter_mut().zip(&g.sh[3..]) {
                    *a += b;
                }
            }
            if sh_rest_steps_at(self.cfg, it) {
                for (p, g) in self.pending_rest.iter_mut().zip(grads.params.iter_mut()) {
                    g.sh[3..].copy_from_slice(p);
                    p.fill(0.0);
                }
            } else {
                active[rest] = false;
            }
        }

        let before: Vec<[f64; 3]> = self.scene.gaussians.iter().map(|g| g.mu).collect();
        let lr = self.rates(it);
        self.adam.step(&mut self.scene.gaussians, &grads.params, &lr, active);
        for ((d, b), g) in self.last_step.iter_mut().zip(&before).zip(&self.scene.gaussians) {
            *d = [g.mu[0] - b[0], g.mu[1] - b[1], g.mu[2] - b[2]];
        }
        Ok((loss.f64(), train_psnr, frame.grid.num_pairs()))
    }

    fn rates(&self, it: usize) -> GroupRates {
        let c = self.cfg;
        let mut lr = [0.0; 6];
        lr[ParamGroup::Position.index()] = position_lr(c, it, self.extent);
        lr[ParamGroup::ShDc.index()] = c.lr_sh_dc;
        lr[ParamGroup::ShRest.index()] = c.lr_sh_rest;
        lr[ParamGroup::Opacity.index()] = c.lr_opacity;
        lr[ParamGroup::Scale.index()] = c.lr_scale;
        lr[ParamGroup::Rotation.index()] = c.lr_rotation;
        lr
    }

    fn remap(&mut self, sources: &[Option<usize>]) {
        self.adam.remap(sources);
        self.table.remap(sources);
        let rest = self.pending_rest.first().map_or(0, Vec::len);
        self.last_step = sources.iter().map(|s| s.map_or([0.0; 3], |i| self.last_step[i])).collect();
        self.pending_rest = sources
            .iter()
            .map(|s| s.map_or_else(|| vec![0.0; rest], |i| self.pending_rest[i].clone()))
            .collect();
    }

    fn density_control(&mut self, it: usize) -> Result<Vec<TrainEvent>> {
        let cfg = self.cfg;
        let ev = events_at(cfg, it);
        let mut out = Vec::new();
        if ev.any() {
            if (cfg.use_vcd || cfg.use_vcp) && !self.dry {
                let picks = sample_views(&mut self.rng, self.ds.train.len(), cfg.k);
                let views: Vec<(&crate::camera::Camera, &Image<F>)> = picks
                    .iter()
                    .map(|&p| {
                        let v = self.ds.train[p];
                        (&self.ds.cameras[v], &self.images[v])
                    })
                    .collect();
                let settings = self.settings(it);
                accumulate_scores(&mut self.table, &self.scene, &views, &settings, cfg.tau, cfg.lambda)?;
            }
            if ev.densify {
                let (clone, split) = select_densify(&self.table, &self.scene, cfg, self.extent);
                let sources = apply_densify(
                    &mut self.scene,
                    &clone,
                    &split,
                    Some(&self.last_step),
                    cfg.split_factor,
                    &mut self.rng,
                );
                self.remap(&sources);
                out.push(TrainEvent::Densify {
                    iteration: it,
                    cloned: clone.len(),
                    split: split.len(),
                });
            }
            if let Some(rule) = ev.prune {
                let prune = select_prune(&self.table, &self.scene, rule, cfg, self.extent, it);
                let sources = apply_prune(&mut self.scene, &prune);
                self.remap(&sources);
                out.push(TrainEvent::Prune {
                    iteration: it,
                    rule,
                    removed: prune.len(),
                });
            }
            self.table = ScoreTable::new(self.scene.len());
        }
        if cfg.opacity_reset_every > 0 && it.is_multiple_of(cfg.opacity_reset_every) && it <= cfg.densify_until {
            let cap = logit(RESET_OPACITY);
            for g in &mut self.scene.gaussians {
                g.opacity_logit = g.opacity_logit.min(cap);
            }
            let o = ParamGroup::Opacity.index();
            for (m, v) in self.adam.m.iter_mut().zip(self.adam.v.iter_mut()) {
                m.groups_mut()[o].1.fill(0.0);
                v.groups_mut()[o].1.fill(0.0);
            }
            out.push(TrainEvent::OpacityReset { iteration: it });
        }
        Ok(out)
    }
}

/// Writes the per-iteration log as CSV.
pub fn write_log_csv<W: Write>(rows: &[LogRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_log_file(rows: &[LogRow], path: &Path) -> Result<()> {
    write_log_csv(rows, std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Renders every listed view and returns `(psnr, ssim)` per view.
pub fn evaluate_views<F: Real>(scene: &Scene, ds: &Dataset, views: &[usize], s: &RenderSettings) -> Result<Vec<(f64, f64)>> {
    views
        .iter()
        .map(|&v| {
            let frame = render::<F>(scene, &ds.cameras[v], s)?;
            let gt: Image<F> = ds.images[v].cast();
            Ok((psnr(frame.image(), &gt)?, crate::loss::ssim(frame.image(), &gt)?.f64()))
        })
        .collect()
}

/// Loss of a single view; handy for progress checks.
pub fn view_loss<F: Real>(scene: &Scene, ds: &Dataset, view: usize, s: &RenderSettings, lambda: f64) -> Result<f64> {
    let frame = render::<F>(scene, &ds.cameras[view], s)?;
    let gt: Image<F> = ds.images[view].cast();
    crate::loss::photometric_loss(frame.image(), &gt, lambda)
}

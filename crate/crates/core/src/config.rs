//! Training configuration.
//!
//! Config files are flat TOML key/value tables using the field names below;
//! unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use crate::raster::Binning;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningMode {
    Aabb,
    Compact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Views sampled per scoring round.
    pub k: usize,
    pub lambda: f64,
    /// Threshold on the min-max normalized error map for the high-error mask.
    pub tau: f64,
    pub tau_d: f64,
    pub tau_p: f64,
    pub beta: f64,
    pub tau_alpha: f64,
    pub binning: BinningMode,
    pub tile_size: usize,

    pub use_vcd: bool,
    pub use_vcp: bool,
    /// Split candidates use the per-pixel absolute positional gradient.
    pub abs_grad_split: bool,

    pub densify_from: usize,
    pub densify_until: usize,
    pub densify_every: usize,
    pub prune_every_early: usize,
    pub prune_every_late: usize,
    pub grad_threshold: f64,
    pub percent_dense: f64,
    pub split_factor: f64,
    pub min_opacity: f64,
    /// Opacity floor of the late multi-view pruning rule.
    pub late_min_opacity: f64,
    pub max_screen_size: f64,
    pub max_world_size: f64,
    /// Screen/world size pruning only kicks in after this iteration.
    pub big_prune_from: usize,

    pub opacity_reset_every: usize,
    pub lazy_opt_enabled: bool,
    pub lazy_opt_start: usize,
    pub lazy_opt_switch: usize,
    pub lazy_opt_interval_15k: usize,
    pub lazy_opt_interval_20k: usize,

    pub sh_degree: usize,
    pub sh_increase_every: usize,

    pub lr_position_init: f64,
    pub lr_position_final: f64,
    pub lr_position_max_steps: usize,
    pub lr_sh_dc: f64,
    pub lr_sh_rest: f64,
    pub lr_opacity: f64,
    pub lr_scale: f64,
    pub lr_rotation: f64,

    pub seed: u64,
    pub workers: usize,
    pub float64: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 30_000,
            k: 10,
            lambda: 0.2,
            tau: 0.5,
            tau_d: 5.0,
            tau_p: 0.9,
            beta: 1.0,
            tau_alpha: 1.0 / 255.0,
            binning: BinningMode::Compact,
            tile_size: 16,
            use_vcd: true,
            use_vcp: true,
            abs_grad_split: true,
            densify_from: 500,
            densify_until: 15_000,
            densify_every: 500,
            prune_every_early: 500,
            prune_every_late: 3000,
            grad_threshold: 2e-4,
            percent_dense: 0.01,
            split_factor: 1.6,
            min_opacity: 0.005,
            late_min_opacity: 0.1,
            max_screen_size: 20.0,
            max_world_size: 0.1,
            big_prune_from: 3000,
            opacity_reset_every: 0,
            lazy_opt_enabled: false,
            lazy_opt_start: 15_000,
            lazy_opt_switch: 20_000,
            lazy_opt_interval_15k: 32,
            lazy_opt_interval_20k: 64,
            sh_degree: 3,
            sh_increase_every: 1000,
            lr_position_init: 1.6e-4,
            lr_position_final: 1.6e-6,
            lr_position_max_steps: 30_000,
            lr_sh_dc: 2.5e-3,
            lr_sh_rest: 2.5e-3 / 20.0,
            lr_opacity: 5e-2,
            lr_scale: 5e-3,
            lr_rotation: 1e-3,
            seed: 0,
            workers: 1,
            float64: false,
        }
    }
}

impl TrainConfig {
    /// Vanilla gradient-driven density control, no multi-view scores, 3-sigma boxes.
    pub fn baseline() -> Self {
        Self {
            use_vcd: false,
            use_vcp: false,
            binning: BinningMode::Aabb,
            ..Self::default()
        }
    }

    pub fn binning(&self) -> Binning {
        match self.binning {
            BinningMode::Aabb => Binning::Aabb,
            BinningMode::Compact => Binning::Compact {
                beta: self.beta,
                tau_alpha: self.tau_alpha,
            },
        }
    }

    /// Same schedule compressed by an integer factor (iterations, cadences,
    /// thresholds expressed in iterations).
    pub fn compressed(&self, factor: usize) -> Self {
        let f = factor.max(1);
        Self {
            iterations: self.iterations / f,
            densify_from: self.densify_from / f,
            densify_until: self.densify_until / f,
            densify_every: self.densify_every / f,
            prune_every_early: self.prune_every_early / f,
            prune_every_late: self.prune_every_late / f,
            big_prune_from: self.big_prune_from / f,
            opacity_reset_every: self.opacity_reset_every / f,
            lazy_opt_start: self.lazy_opt_start / f,
            lazy_opt_switch: self.lazy_opt_switch / f,
            sh_increase_every: self.sh_increase_every / f,
            lr_position_max_steps: self.lr_position_max_steps / f,
            ..self.clone()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau {} outside (0, 1)", self.tau));
        }
        if self.tau_d < 0.0 {
            return bad(format!("tau_d {} is negative", self.tau_d));
        }
        if !(0.0..=1.0).contains(&self.tau_p) {
            return bad(format!("tau_p {} outside [0, 1]", self.tau_p));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta {} outside (0, 1]", self.beta));
        }
        if !(self.tau_alpha > 0.0 && self.tau_alpha < 1.0) {
            return bad(format!("tau_alpha {} outside (0, 1)", self.tau_alpha));
        }
        if self.tile_size == 0 {
            return bad("tile_size must be positive".into());
        }
        if self.densify_every == 0 || self.prune_every_early == 0 || self.prune_every_late == 0 {
            return bad("densify/prune cadences must be positive".into());
        }
        if self.densify_until < self.densify_from {
            return bad("densify_until precedes densify_from".into());
        }
        if !(self.densify_until - self.densify_from).is_multiple_of(self.densify_every) {
            return bad(format!(
                "densify_every {} does not divide densify_until - densify_from = {}",
                self.densify_every,
                self.densify_until - self.densify_from
            ));
        }
        if self.sh_degree > 3 {
            return bad(format!("sh_degree {} exceeds 3", self.sh_degree));
        }
        if self.split_factor <= 1.0 {
            return bad("split_factor must exceed 1".into());
        }
        if self.lazy_opt_enabled && (self.lazy_opt_interval_15k == 0 || self.lazy_opt_interval_20k == 0) {
            return bad("lazy optimizer intervals must be positive".into());
        }
        Ok(())
    }
}

//! Iteration schedules: when density control fires and which optimizer
//! groups step on a given iteration.

use crate::config::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PruneRule {
    /// Vanilla candidates, thinned by pruning score.
    Early,
    /// Opacity floor or pruning-score threshold.
    Late,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Events {
    pub densify: bool,
    pub prune: Option<PruneRule>,
}

impl Events {
    pub fn any(&self) -> bool {
        self.densify || self.prune.is_some()
    }
}

/// Density-control events at `iteration` (1-based, counted after the step).
pub fn events_at(cfg: &TrainConfig, iteration: usize) -> Events {
    if iteration == 0 {
        return Events::default();
    }
    let in_window = iteration >= cfg.densify_from && iteration <= cfg.densify_until;
    let densify = in_window && (iteration - cfg.densify_from).is_multiple_of(cfg.densify_every);
    let prune = if in_window {
        (iteration - cfg.densify_from).is_multiple_of(cfg.prune_every_early).then_some(())
    } else if iteration > cfg.densify_until {
        iteration.is_multiple_of(cfg.prune_every_late).then_some(())
    } else {
        None
    }
    .map(|_| {
        if iteration >= cfg.densify_until {
            PruneRule::Late
        } else {
            PruneRule::Early
        }
    });
    Events { densify, prune }
}

/// Whether the SH-rest group applies its accumulated gradient at `iteration`.
pub fn sh_rest_steps_at(cfg: &TrainConfig, iteration: usize) -> bool {
    if !cfg.lazy_opt_enabled || iteration < cfg.lazy_opt_start {
        return true;
    }
    let interval = if iteration < cfg.lazy_opt_switch {
        cfg.lazy_opt_interval_15k
    } else {
        cfg.lazy_opt_interval_20k
    };
    iteration.is_multiple_of(interval)
}

/// Active SH degree at `iteration`: starts at 0, grows by one every
/// `sh_increase_every` iterations up to the scene's degree.
pub fn active_sh_degree(cfg: &TrainConfig, iteration: usize, max_degree: usize) -> usize {
    if cfg.sh_increase_every == 0 {
        return max_degree;
    }
    (iteration / cfg.sh_increase_every).min(max_degree)
}

/// Exponential (log-linear) decay of the position learning rate.
pub fn position_lr(cfg: &TrainConfig, step: usize, extent: f64) -> f64 {
    let t = if cfg.lr_position_max_steps == 0 {
        1.0
    } else {
        (step as f64 / cfg.lr_position_max_steps as f64).clamp(0.0, 1.0)
    };
    let (a, b) = (cfg.lr_position_init * extent, cfg.lr_position_final * extent);
    (a.ln() * (1.0 - t) + b.ln() * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_event_iterations() {
        let cfg = TrainConfig::default();
        let e = events_at(&cfg, 500);
        assert!(e.densify);
        assert_eq!(e.prune, Some(PruneRule::Early));
        assert_eq!(events_at(&cfg, 15_500), Events::default());
        assert_eq!(events_at(&cfg, 18_000).prune, Some(PruneRule::Late));
        assert!(!events_at(&cfg, 18_000).densify);
        let e = events_at(&cfg, 15_000);
        assert!(e.densify);
        assert_eq!(e.prune, Some(PruneRule::Late));
        assert_eq!(events_at(&cfg, 499), Events::default());
        assert_eq!(events_at(&cfg, 0), Events::default());
    }

    #[test]
    fn next_prune_after_window_is_18000() {
        let cfg = TrainConfig::default();
        let next = (15_001..=30_000).find(|&i| events_at(&cfg, i).any());
        assert_eq!(next, Some(18_000));
    }

    #[test]
    fn lazy_intervals() {
        let mut cfg = TrainConfig::default();
        assert!(sh_rest_steps_at(&cfg, 15_001));
        cfg.lazy_opt_enabled = true;
        assert!(sh_rest_steps_at(&cfg, 14_999));
        assert!(!sh_rest_steps_at(&cfg, 15_001));
        assert!(sh_rest_steps_at(&cfg, 15_008));
        assert!(sh_rest_steps_at(&cfg, 20_032));
        // multiple of 32 but not of 64
        assert!(!sh_rest_steps_at(&cfg, 20_064));
    }

    #[test]
    fn position_lr_endpoints() {
        let cfg = TrainConfig::default();
        assert!((position_lr(&cfg, 0, 2.0) - 3.2e-4).abs() < 1e-15);
        assert!((position_lr(&cfg, 30_000, 2.0) - 3.2e-6).abs() < 1e-17);
        assert!((position_lr(&cfg, 15_000, 1.0) - 1.6e-5).abs() < 1e-15);
    }

    #[test]
    fn sh_degree_ramp() {
        let cfg = TrainConfig::default();
        assert_eq!(active_sh_degree(&cfg, 0, 3), 0);
        assert_eq!(active_sh_degree(&cfg, 2500, 3), 2);
        assert_eq!(active_sh_degree(&cfg, 9000, 3), 3);
        assert_eq!(active_sh_degree(&cfg, 9000, 1), 1);
    }
}

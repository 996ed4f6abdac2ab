//! Multi-view consistent adaptive density control.
//!
//! Each densify/prune event samples up to `K` training views, renders them,
//! marks the pixels whose normalized error exceeds `tau`, and counts how many
//! of those pixels every Gaussian actually blended into. The mean count is
//! the densification score `s_d`; the count weighted by the view's
//! photometric loss, min-max normalized, is the pruning score `s_p`.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::camera::Camera;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::loss::photometric_loss;
use crate::math::{mat3_vec, Real};
use crate::raster::{blend_forward, FootprintCounter};
use crate::render::{render, RenderSettings, ViewGrads};
use crate::scene::{quat_to_rotation, Gaussian3D, Scene};
use crate::schedule::PruneRule;

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMaps {
    pub width: usize,
    pub height: usize,
    /// Mean absolute error over channels, per pixel.
    pub raw: Vec<f64>,
    /// `raw` min-max normalized to `[0, 1]`; all zeros when `raw` is constant.
    pub normalized: Vec<f64>,
    pub mask: Vec<bool>,
    pub photometric: f64,
}

/// Min-max normalization; all zeros when the input is constant or empty.
pub fn min_max_normalize(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; v.len()];
    }
    let span = hi - lo;
    v.iter().map(|&x| (x - lo) / span).collect()
}

pub fn build_error_maps<F: Real>(rendered: &Image<F>, gt: &Image<F>, tau: f64, lambda: f64) -> Result<ErrorMaps> {
    rendered.same_shape(gt)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!("tau {tau} outside (0, 1)")));
    }
    let raw: Vec<f64> = rendered
        .data
        .chunks_exact(3)
        .zip(gt.data.chunks_exact(3))
        .map(|(r, g)| (0..3).map(|c| (r[c].f64() - g[c].f64()).abs()).sum::<f64>() / 3.0)
        .collect();
    let normalized = min_max_normalize(&raw);
    let mask = normalized.iter().map(|&v| v > tau).collect();
    Ok(ErrorMaps {
        width: rendered.width,
        height: rendered.height,
        raw,
        normalized,
        mask,
        photometric: photometric_loss(rendered, gt, lambda)?,
    })
}

/// Per-Gaussian density-control statistics since the last event.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreTable {
    pub s_d: Vec<f64>,
    pub s_p_raw: Vec<f64>,
    pub s_p: Vec<f64>,
    /// Sum over iterations of `|d mean2d|` (NDC units).
    pub grad_norm_acc: Vec<f64>,
    /// Sum over iterations of the per-pixel absolute gradient norm (NDC units).
    pub abs_grad_acc: Vec<f64>,
    pub views_seen: Vec<u32>,
    /// Largest screen radius seen, in pixels.
    pub max_radius: Vec<f64>,
}

impl ScoreTable {
    pub fn new(n: usize) -> Self {
        Self {
            s_d: vec![0.0; n],
            s_p_raw: vec![0.0; n],
            s_p: vec![0.0; n],
            grad_norm_acc: vec![0.0; n],
            abs_grad_acc: vec![0.0; n],
            views_seen: vec![0; n],
            max_radius: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.s_d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_d.is_empty()
    }

    /// Adds one training view's positional gradients. Pixel gradients are
    /// converted to NDC by the half image size.
    pub fn add_view_gradients(&mut self, g: &ViewGrads, width: usize, height: usize) {
        let (sx, sy) = (0.5 * width as f64, 0.5 * height as f64);
        for i in 0..self.len() {
            if !g.visible[i] {
                continue;
            }
            let [dx, dy] = g.d_mu2d[i];
            let [ax, ay] = g.abs_mu2d[i];
            self.grad_norm_acc[i] += (dx * sx).hypot(dy * sy);
            self.abs_grad_acc[i] += (ax * sx).hypot(ay * sy);
            self.views_seen[i] += 1;
            self.max_radius[i] = self.max_radius[i].max(g.radius[i]);
        }
    }

    /// Reorders rows after a scene edit; `None` rows start at zero.
    pub fn remap(&mut self, sources: &[Option<usize>]) {
        fn pick<T: Copy + Default>(v: &[T], sources: &[Option<usize>]) -> Vec<T> {
            sources.iter().map(|s| s.map_or_else(T::default, |i| v[i])).collect()
        }
        self.s_d = pick(&self.s_d, sources);
        self.s_p_raw = pick(&self.s_p_raw, sources);
        self.s_p = pick(&self.s_p, sources);
        self.grad_norm_acc = pick(&self.grad_norm_acc, sources);
        self.abs_grad_acc = pick(&self.abs_grad_acc, sources);
        self.views_seen = pick(&self.views_seen, sources);
        self.max_radius = pick(&self.max_radius, sources);
    }

    pub fn mean_grad(&self, i: usize) -> f64 {
        match self.views_seen[i] {
            0 => 0.0,
            n => self.grad_norm_acc[i] / n as f64,
        }
    }

    pub fn mean_abs_grad(&self, i: usize) -> f64 {
        match self.views_seen[i] {
            0 => 0.0,
            n => self.abs_grad_acc[i] / n as f64,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "s_d", "s_p_raw", "s_p", "grad_norm_acc", "abs_grad_acc", "views_seen"])
            .map_err(csv_err)?;
        for i in 0..self.len() {
            out.write_record([
                i.to_string(),
                self.s_d[i].to_string(),
                self.s_p_raw[i].to_string(),
                self.s_p[i].to_string(),
                self.grad_norm_acc[i].to_string(),
                self.abs_grad_acc[i].to_string(),
                self.views_seen[i].to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Internal(format!("csv: {e}"))
}

/// `min(k, n)` distinct indices from `0..n`, uniformly at random.
pub fn sample_views<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k.min(n)).into_vec()
}

/// Footprint counts and photometric loss of one view.
#[derive(Clone, Debug)]
pub struct ViewScore {
    pub counts: Vec<u32>,
    pub photometric: f64,
}

pub fn score_view<F: Real>(scene: &Scene, cam: &Camera, gt: &Image<F>, s: &RenderSettings, tau: f64, lambda: f64) -> Result<ViewScore> {
    let frame = render::<F>(scene, cam, s)?;
    let maps = build_error_maps(frame.image(), gt, tau, lambda)?;
    let mut counter = FootprintCounter::new(frame.projected.len());
    blend_forward(&frame.grid, &frame.projected, Some(&maps.mask), Some(&mut counter));
    Ok(ViewScore {
        counts: counter.to_scene(&frame.projected, scene.len()),
        photometric: maps.photometric,
    })
}

/// Fills `s_d`, `s_p_raw` and `s_p` from per-view results.
pub fn combine_view_scores(table: &mut ScoreTable, views: &[ViewScore]) -> Result<()> {
    if views.is_empty() {
        return Err(Error::Empty("sampled views"));
    }
    let k = views.len() as f64;
    let n = table.len();
    table.s_d = vec![0.0; n];
    table.s_p_raw = vec![0.0; n];
    for v in views {
        if v.counts.len() != n {
            return Err(Error::DimensionMismatch(format!("{} counts for {n} gaussians", v.counts.len())));
        }
        for i in 0..n {
            let c = v.counts[i] as f64;
            table.s_d[i] += c;
            table.s_p_raw[i] += c * v.photometric;
        }
    }
    for s in &mut table.s_d {
        *s /= k;
    }
    table.s_p = min_max_normalize(&table.s_p_raw);
    Ok(())
}

/// Scores the scene on the given views (in parallel) and writes the result
/// into `table`.
pub fn accumulate_scores<F: Real>(
    table: &mut ScoreTable,
    scene: &Scene,
    views: &[(&Camera, &Image<F>)],
    s: &RenderSettings,
    tau: f64,
    lambda: f64,
) -> Result<()> {
    if views.is_empty() {
        return Err(Error::Empty("training views"));
    }
    let scores = views
        .par_iter()
        .map(|(cam, gt)| score_view(scene, cam, gt, s, tau, lambda))
        .collect::<Result<Vec<_>>>()?;
    combine_view_scores(table, &scores)
}

/// Clone and split candidates, disjoint and ascending.
pub fn select_densify(table: &ScoreTable, scene: &Scene, cfg: &TrainConfig, extent: f64) -> (Vec<usize>, Vec<usize>) {
    let mut clone = Vec::new();
    let mut split = Vec::new();
    let size_limit = cfg.percent_dense * extent;
    for (i, g) in scene.gaussians.iter().enumerate() {
        if cfg.use_vcd && !(table.s_d[i] > cfg.tau_d) {
            continue;
        }
        if g.max_scale() <= size_limit {
            if table.mean_grad(i) >= cfg.grad_threshold {
                clone.push(i);
            }
        } else {
            let grad = if cfg.abs_grad_split {
                table.mean_abs_grad(i)
            } else {
                table.mean_grad(i)
            };
            if grad >= cfg.grad_threshold {
                split.push(i);
            }
        }
    }
    (clone, split)
}

/// Clones and splits in place. Surviving Gaussians keep their order, then
/// clones, then split children. Returns, for every new slot, the old index
/// whose optimizer state carries over (`None` for new Gaussians).
///
/// `clone_offset[i]` is added to the position of the clone of `i`.
pub fn apply_densify<R: Rng + ?Sized>(
    scene: &mut Scene,
    clone: &[usize],
    split: &[usize],
    clone_offset: Option<&[[f64; 3]]>,
    split_factor: f64,
    rng: &mut R,
) -> Vec<Option<usize>> {
    let n = scene.len();
    let mut is_split = vec![false; n];
    for &i in split {
        is_split[i] = true;
    }
    let old = std::mem::take(&mut scene.gaussians);
    let mut sources = Vec::with_capacity(n + clone.len() + split.len());
    let mut out = Vec::with_capacity(n + clone.len() + split.len());
    for (i, g) in old.iter().enumerate() {
        if !is_split[i] {
            out.push(g.clone());
            sources.push(Some(i));
        }
    }
    for &i in clone {
        let mut g = old[i].clone();
        if let Some(off) = clone_offset {
            for a in 0..3 {
                g.mu[a] += off[i][a];
            }
        }
        out.push(g);
        sources.push(None);
    }
    let shrink = split_factor.ln();
    for &i in split {
        let parent = &old[i];
        let r = quat_to_rotation(parent.rot);
        let s = parent.scale();
        for _ in 0..2 {
            let z: [f64; 3] = std::array::from_fn(|a| {
                let n: f64 = StandardNormal.sample(rng);
                s[a] * n
            });
            let d = mat3_vec(&r, z);
            let mut child = parent.clone();
            for a in 0..3 {
                child.mu[a] += d[a];
                child.log_scale[a] -= shrink;
            }
            out.push(child);
            sources.push(None);
        }
    }
    scene.gaussians = out;
    sources
}

/// Vanilla prune candidates: transparent, or (after `big_prune_from`) too
/// large on screen or in the world.
fn vanilla_candidate(i: usize, g: &Gaussian3D, table: &ScoreTable, cfg: &TrainConfig, extent: f64, iteration: usize) -> bool {
    if g.opacity() < cfg.min_opacity {
        return true;
    }
    iteration > cfg.big_prune_from
        && (table.max_radius[i] > cfg.max_screen_size || g.max_scale() > cfg.max_world_size * extent)
}

/// Indices to remove, ascending. Never selects every Gaussian.
pub fn select_prune(table: &ScoreTable, scene: &Scene, rule: PruneRule, cfg: &TrainConfig, extent: f64, iteration: usize) -> Vec<usize> {
    let n = scene.len();
    let mut chosen: Vec<usize> = match (rule, cfg.use_vcp) {
        (_, false) => (0..n)
            .filter(|&i| vanilla_candidate(i, &scene.gaussians[i], table, cfg, extent, iteration))
            .collect(),
        (PruneRule::Early, true) => {
            let mut cand: Vec<usize> = (0..n)
                .filter(|&i| vanilla_candidate(i, &scene.gaussians[i], table, cfg, extent, iteration))
                .collect();
            cand.sort_by(|&a, &b| table.s_p[b].total_cmp(&table.s_p[a]).then(a.cmp(&b)));
            cand.truncate(cand.len().div_ceil(2));
            cand.sort_unstable();
            cand
        }
        (PruneRule::Late, true) => (0..n)
            .filter(|&i| scene.gaussians[i].opacity() < cfg.late_min_opacity || table.s_p[i] > cfg.tau_p)
            .collect(),
    };
    if n > 0 && chosen.len() == n {
        let keep = (0..n)
            .min_by(|&a, &b| table.s_p[a].total_cmp(&table.s_p[b]).then(a.cmp(&b)))
            .unwrap();
        chosen.retain(|&i| i != keep);
    }
    chosen
}

/// Removes `prune` (ascending) and returns the surviving old indices.
pub fn apply_prune(scene: &mut Scene, prune: &[usize]) -> Vec<Option<usize>> {
    let mut drop = vec![false; scene.len()];
    for &i in prune {
        drop[i] = true;
    }
    let old = std::mem::take(&mut scene.gaussians);
    let mut sources = Vec::with_capacity(old.len() - prune.len());
    for (i, g) in old.into_iter().enumerate() {
        if !drop[i] {
            scene.gaussians.push(g);
            sources.push(Some(i));
        }
    }
    sources
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::logit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn img(px: &[[f64; 3]]) -> Image<f64> {
        Image::from_data(px.len(), 1, px.iter().flatten().copied().collect()).unwrap()
    }

    fn gaussian(scale: f64, opacity: f64) -> Gaussian3D {
        let mut g = Gaussian3D::zeros(0);
        g.rot = [1.0, 0.0, 0.0, 0.0];
        g.log_scale = [scale.ln(); 3];
        g.opacity_logit = logit(opacity);
        g
    }

    fn scene_of(gs: Vec<Gaussian3D>) -> Scene {
        Scene::new(gs, 0).unwrap()
    }

    #[test]
    fn identical_images_have_no_error() {
        let a = img(&[[0.1, 0.2, 0.3], [0.5, 0.5, 0.5]]);
        let m = build_error_maps(&a, &a, 0.5, 0.2).unwrap();
        assert!(m.raw.iter().all(|&v| v == 0.0));
        assert!(m.normalized.iter().all(|&v| v == 0.0));
        assert!(m.mask.iter().all(|&v| !v));
        assert!(m.photometric.abs() < 1e-12);
    }

    #[test]
    fn per_pixel_mean_absolute_error() {
        let m = build_error_maps(&img(&[[0.5, 0.3, 0.1]]), &img(&[[0.1, 0.3, 0.5]]), 0.5, 0.2).unwrap();
        assert!((m.raw[0] - 0.8 / 3.0).abs() < 1e-12);
        assert!((m.raw[0] - 0.2667).abs() < 1e-4);
    }

    #[test]
    fn normalization_and_strict_mask() {
        let r = img(&[[0.2; 3], [0.4; 3], [0.6; 3]]);
        let g = img(&[[0.0; 3]; 3]);
        let m = build_error_maps(&r, &g, 0.5, 0.2).unwrap();
        for (a, b) in m.normalized.iter().zip([0.0, 0.5, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        // 0.4 is not the exact binary midpoint of 0.2 and 0.6, so the strict
        // threshold is checked on dyadic values that normalize exactly.
        let r = img(&[[0.25; 3], [0.5; 3], [0.75; 3]]);
        let m = build_error_maps(&r, &g, 0.5, 0.2).unwrap();
        assert_eq!(m.normalized, vec![0.0, 0.5, 1.0]);
        assert_eq!(m.mask, vec![false, false, true]);
    }

    #[test]
    fn degenerate_min_max_is_zero() {
        assert_eq!(min_max_normalize(&[0.3, 0.3]), vec![0.0, 0.0]);
        assert!(min_max_normalize(&[]).is_empty());
    }

    #[test]
    fn rejects_mismatch_and_bad_tau() {
        let a = img(&[[0.0; 3]]);
        let b = img(&[[0.0; 3], [0.0; 3]]);
        assert!(build_error_maps(&a, &b, 0.5, 0.2).is_err());
        assert!(build_error_maps(&a, &a, 1.0, 0.2).is_err());
    }

    #[test]
    fn densification_score_averages_over_views() {
        let mut t = ScoreTable::new(1);
        let views = [
            ViewScore { counts: vec![3], photometric: 0.1 },
            ViewScore { counts: vec![5], photometric: 0.1 },
        ];
        combine_view_scores(&mut t, &views).unwrap();
        assert_eq!(t.s_d, vec![4.0]);
    }

    #[test]
    fn unseen_gaussian_scores_zero() {
        let mut t = ScoreTable::new(2);
        let views = [ViewScore { counts: vec![0, 2], photometric: 0.3 }];
        combine_view_scores(&mut t, &views).unwrap();
        assert_eq!((t.s_d[0], t.s_p_raw[0]), (0.0, 0.0));
    }

    #[test]
    fn pruning_score_weights_by_photometric_loss() {
        let mut t = ScoreTable::new(2);
        combine_view_scores(&mut t, &[ViewScore { counts: vec![4, 0], photometric: 0.25 }]).unwrap();
        assert_eq!(t.s_p_raw, vec![1.0, 0.0]);
        assert_eq!(t.s_p, vec![1.0, 0.0]);
    }

    #[test]
    fn no_views_is_an_error() {
        assert!(combine_view_scores(&mut ScoreTable::new(1), &[]).is_err());
    }

    fn densify_table(grad: f64, s_d: f64) -> ScoreTable {
        let mut t = ScoreTable::new(1);
        t.grad_norm_acc[0] = grad;
        t.abs_grad_acc[0] = grad;
        t.views_seen[0] = 1;
        t.s_d[0] = s_d;
        t
    }

    #[test]
    fn densify_requires_both_criteria() {
        let cfg = TrainConfig::default();
        let scene = scene_of(vec![gaussian(0.001, 0.5)]);
        let thr = cfg.grad_threshold;
        assert_eq!(select_densify(&densify_table(2.0 * thr, 3.0), &scene, &cfg, 1.0), (vec![], vec![]));
        assert_eq!(select_densify(&densify_table(0.5 * thr, 100.0), &scene, &cfg, 1.0), (vec![], vec![]));
        assert_eq!(select_densify(&densify_table(2.0 * thr, 6.0), &scene, &cfg, 1.0), (vec![0], vec![]));
        let big = scene_of(vec![gaussian(0.5, 0.5)]);
        assert_eq!(select_densify(&densify_table(2.0 * thr, 6.0), &big, &cfg, 1.0), (vec![], vec![0]));
    }

    #[test]
    fn split_uses_absolute_gradient() {
        let cfg = TrainConfig::default();
        let big = scene_of(vec![gaussian(0.5, 0.5)]);
        let mut t = densify_table(0.0, 10.0);
        t.abs_grad_acc[0] = 2.0 * cfg.grad_threshold;
        assert_eq!(select_densify(&t, &big, &cfg, 1.0).1, vec![0]);
        let vanilla = TrainConfig {
            abs_grad_split: false,
            ..cfg
        };
        assert!(select_densify(&t, &big, &vanilla, 1.0).1.is_empty());
    }

    #[test]
    fn densify_cardinality_and_child_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut scene = scene_of(vec![gaussian(1.6, 0.5), gaussian(0.1, 0.5), gaussian(0.2, 0.5)]);
        let untouched = scene.clone();
        assert_eq!(apply_densify(&mut scene, &[], &[], None, 1.6, &mut rng).len(), 3);
        assert_eq!(scene, untouched);

        let sources = apply_densify(&mut scene, &[1], &[0], None, 1.6, &mut rng);
        assert_eq!(scene.len(), 3 + 1 + 1);
        assert_eq!(sources, vec![Some(1), Some(2), None, None, None]);
        assert_eq!(scene.gaussians[2], untouched.gaussians[1]);
        for child in &scene.gaussians[3..] {
            for s in child.scale() {
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clone_offset_applied() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut scene = scene_of(vec![gaussian(0.1, 0.5)]);
        apply_densify(&mut scene, &[0], &[], Some(&[[0.1, 0.0, -0.2]]), 1.6, &mut rng);
        assert_eq!(scene.gaussians[1].mu, [0.1, 0.0, -0.2]);
    }

    #[test]
    fn late_prune_rules() {
        let cfg = TrainConfig::default();
        let scene = scene_of(vec![gaussian(0.1, 0.05), gaussian(0.1, 0.5), gaussian(0.1, 0.5)]);
        let mut t = ScoreTable::new(3);
        t.s_p = vec![0.2, 0.95, 0.0];
        assert_eq!(select_prune(&t, &scene, PruneRule::Late, &cfg, 1.0, 16_000), vec![0, 1]);
    }

    #[test]
    fn early_prune_takes_top_half_of_candidates() {
        let cfg = TrainConfig::default();
        let mut gs: Vec<Gaussian3D> = (0..4).map(|_| gaussian(0.01, 0.001)).collect();
        gs.push(gaussian(0.01, 0.9));
        let scene = scene_of(gs);
        let mut t = ScoreTable::new(5);
        t.s_p = vec![0.8, 0.1, 0.9, 0.2, 1.0];
        assert_eq!(select_prune(&t, &scene, PruneRule::Early, &cfg, 1.0, 1000), vec![0, 2]);
    }

    #[test]
    fn never_prunes_everything() {
        let cfg = TrainConfig::default();
        let scene = scene_of(vec![gaussian(0.1, 0.01), gaussian(0.1, 0.01)]);
        let mut t = ScoreTable::new(2);
        t.s_p = vec![0.5, 0.4];
        assert_eq!(select_prune(&t, &scene, PruneRule::Late, &cfg, 1.0, 20_000), vec![0]);
        let base = TrainConfig::baseline();
        assert_eq!(select_prune(&t, &scene, PruneRule::Late, &base, 1.0, 20_000), vec![0]);
    }

    #[test]
    fn prune_removes_and_reports_sources() {
        let mut scene = scene_of((1..=4).map(|k| gaussian(0.1 * k as f64, 0.5)).collect());
        let sources = apply_prune(&mut scene, &[1, 3]);
        assert_eq!(sources, vec![Some(0), Some(2)]);
        assert_eq!(scene.len(), 2);
    }

    #[test]
    fn sampling_without_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut v = sample_views(&mut rng, 20, 10);
        v.sort_unstable();
        v.dedup();
        assert_eq!(v.len(), 10);
        assert_eq!(sample_views(&mut rng, 4, 10).len(), 4);
    }
}

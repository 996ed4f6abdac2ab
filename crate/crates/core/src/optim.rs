//! Adam over the per-Gaussian parameter groups.

use rayon::prelude::*;

use crate::scene::{Gaussian3D, ParamGroup};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-15;

/// Learning rate per [`ParamGroup`], indexed by `ParamGroup::index`.
pub type GroupRates = [f64; 6];

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: Vec<Gaussian3D>,
    pub v: Vec<Gaussian3D>,
    /// Steps taken per group (bias correction).
    pub steps: [u64; 6],
    sh_degree: usize,
}

impl Adam {
    pub fn new(n: usize, sh_degree: usize) -> Self {
        Self {
            m: vec![Gaussian3D::zeros(sh_degree); n],
            v: vec![Gaussian3D::zeros(sh_degree); n],
            steps: [0; 6],
            sh_degree,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One Adam step for the groups flagged in `active`. Inactive groups keep
    /// their parameters, moments and step counters.
    pub fn step(&mut self, params: &mut [Gaussian3D], grads: &[Gaussian3D], lr: &GroupRates, active: [bool; 6]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        let mut corr = [(0.0, 0.0); 6];
        for g in ParamGroup::ALL {
            let i = g.index();
            if active[i] {
                self.steps[i] += 1;
                let t = self.steps[i] as i32;
                corr[i] = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
            }
        }
        params
            .par_iter_mut()
            .zip(grads.par_iter())
            .zip(self.m.par_iter_mut().zip(self.v.par_iter_mut()))
            .for_each(|((p, g), (m, v))| {
                let blocks = p
                    .groups_mut()
                    .into_iter()
                    .zip(g.groups())
                    .zip(m.groups_mut().into_iter().zip(v.groups_mut()));
                for (((group, p), (_, g)), ((_, m), (_, v))) in blocks {
                    let i = group.index();
                    if !active[i] {
                        continue;
                    }
                    let (c1, c2) = corr[i];
                    for k in 0..p.len() {
                        m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
                        v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
                        let m_hat = m[k] / c1;
                        let v_hat = v[k] / c2;
                        p[k] -= lr[i] * m_hat / (v_hat.sqrt() + EPS);
                    }
                }
            });
    }

    /// Rebuilds the moment buffers after the scene was edited. `sources[i]`
    /// names the old Gaussian whose state the new Gaussian `i` inherits;
    /// `None` starts from zero moments.
    pub fn remap(&mut self, sources: &[Option<usize>]) {
        let zero = Gaussian3D::zeros(self.sh_degree);
        let pick = |buf: &[Gaussian3D]| -> Vec<Gaussian3D> {
            sources
                .iter()
                .map(|s| s.map_or_else(|| zero.clone(), |i| buf[i].clone()))
                .collect()
        };
        self.m = pick(&self.m);
        self.v = pick(&self.v);
    }
}

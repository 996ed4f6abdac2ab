//! Scene checkpoints in the customary Gaussian splatting PLY layout:
//! binary little-endian float properties `x y z nx ny nz f_dc_0..2
//! f_rest_* opacity scale_0..2 rot_0..3`, with opacity as a logit and
//! scales as logs. `f_rest` is channel-major, so `f_rest_{c*(K-1)+j}` holds
//! coefficient `j + 1` of channel `c`.

use std::path::Path;

use super::ply::{read_vertices, write_vertices_file, Format, Scalar};
use crate::error::{Error, Result};
use crate::scene::{Gaussian3D, Scene};
use crate::sh::num_sh_coeffs;

pub fn property_names(sh_degree: usize) -> Vec<String> {
    let rest = 3 * (num_sh_coeffs(sh_degree) - 1);
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..rest).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names
}

pub fn save_checkpoint(scene: &Scene, path: &Path) -> Result<()> {
    let names = property_names(scene.sh_degree);
    let props: Vec<(&str, Scalar)> = names.iter().map(|n| (n.as_str(), Scalar::F32)).collect();
    let k = num_sh_coeffs(scene.sh_degree);
    let rows: Vec<Vec<f64>> = scene
        .gaussians
        .iter()
        .map(|g| {
            let mut row = Vec::with_capacity(props.len());
            row.extend_from_slice(&g.mu);
            row.extend_from_slice(&[0.0; 3]);
            row.extend_from_slice(&g.sh[..3]);
            for c in 0..3 {
                for j in 1..k {
                    row.push(g.sh[3 * j + c]);
                }
            }
            row.push(g.opacity_logit);
            row.extend_from_slice(&g.log_scale);
            row.extend_from_slice(&g.rot);
            row
        })
        .collect();
    write_vertices_file(path, Format::BinaryLittleEndian, &props, &rows)
}

pub fn load_checkpoint(path: &Path) -> Result<Scene> {
    let t = read_vertices(path)?;
    let n_rest = t.names().filter(|n| n.starts_with("f_rest_")).count();
    let sh_degree = (0..=3)
        .find(|&d| 3 * (num_sh_coeffs(d) - 1) == n_rest)
        .ok_or_else(|| Error::Malformed {
            what: "checkpoint",
            path: path.to_path_buf(),
            reason: format!("{n_rest} f_rest properties match no SH degree"),
        })?;
    let names = property_names(sh_degree);
    let cols: Vec<&[f64]> = names
        .iter()
        .filter(|n| !matches!(n.as_str(), "nx" | "ny" | "nz"))
        .map(|n| t.require(n))
        .collect::<Result<_>>()?;
    // cols: x y z f_dc(3) f_rest(n_rest) opacity scale(3) rot(4)
    let k = num_sh_coeffs(sh_degree);
    let gaussians = (0..t.count)
        .map(|i| {
            let v = |c: usize| cols[c][i];
            let mut g = Gaussian3D::zeros(sh_degree);
            g.mu = [v(0), v(1), v(2)];
            g.sh[..3].copy_from_slice(&[v(3), v(4), v(5)]);
            for c in 0..3 {
                for j in 1..k {
                    g.sh[3 * j + c] = v(6 + c * (k - 1) + j - 1);
                }
            }
            let o = 6 + n_rest;
            g.opacity_logit = v(o);
            g.log_scale = [v(o + 1), v(o + 2), v(o + 3)];
            g.rot = [v(o + 4), v(o + 5), v(o + 6), v(o + 7)];
            g
        })
        .collect();
    Scene::new(gaussians, sh_degree)
}

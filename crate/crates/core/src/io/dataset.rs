//! Dataset directories:
//!
//! ```text
//! cameras.json   [{id, width, height, fx, fy, cx, cy, world_to_cam: [16 floats, row-major],
//!                  image?: "<file>" (default "<id>.png"), near?: float}, ...]
//! images/        8-bit PNGs
//! points3d.ply   x y z red green blue (ASCII or binary little-endian)
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ply::{read_vertices, write_vertices_file, Format, Scalar};
use super::{load_png, save_png};
use crate::camera::{Camera, DEFAULT_NEAR};
use crate::error::{Error, Result};
use crate::image::Image;

/// Every n-th view (starting at 0) is held out for testing.
pub const TEST_EVERY: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub cameras: Vec<Camera>,
    pub images: Vec<Image<f32>>,
    pub image_names: Vec<String>,
    /// Initial point cloud: position and RGB in `[0, 1]`.
    pub init_points: Vec<([f64; 3], [f64; 3])>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Train/test indices. A single-view dataset keeps its view for training.
pub fn split_indices(n: usize) -> (Vec<usize>, Vec<usize>) {
    if n < 2 {
        return ((0..n).collect(), Vec::new());
    }
    (0..n).partition(|i| i % TEST_EVERY != 0)
}

impl Dataset {
    pub fn new(cameras: Vec<Camera>, images: Vec<Image<f32>>, image_names: Vec<String>, init_points: Vec<([f64; 3], [f64; 3])>) -> Result<Self> {
        if cameras.len() != images.len() || cameras.len() != image_names.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} cameras, {} images, {} image names",
                cameras.len(),
                images.len(),
                image_names.len()
            )));
        }
        for (i, (cam, img)) in cameras.iter().zip(&images).enumerate() {
            cam.validate()?;
            if cam.width != img.width || cam.height != img.height {
                return Err(Error::DimensionMismatch(format!(
                    "camera {i} is {}x{} but image `{}` is {}x{}",
                    cam.width, cam.height, image_names[i], img.width, img.height
                )));
            }
        }
        let (train, test) = split_indices(cameras.len());
        Ok(Self {
            cameras,
            images,
            image_names,
            init_points,
            train,
            test,
        })
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    /// Radius used to scale size thresholds: 1.1 times the largest distance
    /// of a camera center from the mean center.
    pub fn scene_extent(&self) -> f64 {
        scene_extent(&self.cameras)
    }
}

pub fn scene_extent(cameras: &[Camera]) -> f64 {
    if cameras.is_empty() {
        return 1.0;
    }
    let centers: Vec<[f64; 3]> = cameras.iter().map(Camera::center).collect();
    let n = centers.len() as f64;
    let mean: [f64; 3] = std::array::from_fn(|a| centers.iter().map(|c| c[a]).sum::<f64>() / n);
    let r = centers
        .iter()
        .map(|c| ((c[0] - mean[0]).powi(2) + (c[1] - mean[1]).powi(2) + (c[2] - mean[2]).powi(2)).sqrt())
        .fold(0.0, f64::max);
    let r = 1.1 * r;
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub id: u32,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub world_to_cam: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near: Option<f64>,
}

impl CameraRecord {
    pub fn to_camera(&self) -> std::result::Result<Camera, String> {
        if self.world_to_cam.len() != 16 {
            return Err(format!(
                "camera {}: world_to_cam has {} values, expected 16",
                self.id,
                self.world_to_cam.len()
            ));
        }
        let m: [[f64; 4]; 4] = std::array::from_fn(|i| std::array::from_fn(|j| self.world_to_cam[4 * i + j]));
        Ok(Camera {
            width: self.width,
            height: self.height,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            world_to_cam: m,
            near: self.near.unwrap_or(DEFAULT_NEAR),
        })
    }

    pub fn from_camera(id: u32, cam: &Camera, image: Option<String>) -> Self {
        Self {
            id,
            width: cam.width,
            height: cam.height,
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            world_to_cam: cam.world_to_cam.iter().flatten().copied().collect(),
            image,
            near: (cam.near != DEFAULT_NEAR).then_some(cam.near),
        }
    }

    pub fn image_name(&self) -> String {
        self.image.clone().unwrap_or_else(|| format!("{}.png", self.id))
    }
}

fn require_file(path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingFile(path))
    }
}

pub fn read_cameras(path: &Path) -> Result<Vec<CameraRecord>> {
    let path = require_file(path.to_path_buf())?;
    let text = std::fs::read_to_string(&path)?;
    let malformed = |reason: String| Error::Malformed {
        what: "camera JSON",
        path: path.clone(),
        reason,
    };
    let records: Vec<CameraRecord> = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    for r in &records {
        r.to_camera().map_err(malformed)?;
    }
    Ok(records)
}

pub fn write_cameras(path: &Path, records: &[CameraRecord]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(records)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_points(path: &Path) -> Result<Vec<([f64; 3], [f64; 3])>> {
    let t = read_vertices(path)?;
    let col = |n: &str| t.require(n);
    let (x, y, z) = (col("x")?, col("y")?, col("z")?);
    let (r, g, b) = (col("red")?, col("green")?, col("blue")?);
    Ok((0..t.count)
        .map(|i| ([x[i], y[i], z[i]], [r[i] / 255.0, g[i] / 255.0, b[i] / 255.0]))
        .collect())
}

/// Writes points as binary PLY with float positions and 8-bit colors.
pub fn write_points(path: &Path, points: &[([f64; 3], [f64; 3])]) -> Result<()> {
    let props = [
        ("x", Scalar::F32),
        ("y", Scalar::F32),
        ("z", Scalar::F32),
        ("red", Scalar::U8),
        ("green", Scalar::U8),
        ("blue", Scalar::U8),
    ];
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|(p, c)| {
            let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round();
            vec![p[0], p[1], p[2], q(c[0]), q(c[1]), q(c[2])]
        })
        .collect();
    write_vertices_file(path, Format::BinaryLittleEndian, &props, &rows)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let records = read_cameras(&dir.join("cameras.json"))?;
    if records.is_empty() {
        return Err(Error::Empty("cameras.json lists no cameras"));
    }
    let points = read_points(&require_file(dir.join("points3d.ply"))?)?;
    let mut cameras = Vec::with_capacity(records.len());
    let mut images = Vec::with_capacity(records.len());
    let mut names = Vec::with_capacity(records.len());
    for r in &records {
        let name = r.image_name();
        let img = load_png(&require_file(dir.join("images").join(&name))?)?;
        cameras.push(r.to_camera().expect("validated"));
        images.push(img);
        names.push(name);
    }
    Dataset::new(cameras, images, names, points)
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join("images"))?;
    let records: Vec<CameraRecord> = ds
        .cameras
        .iter()
        .zip(&ds.image_names)
        .enumerate()
        .map(|(i, (cam, name))| {
            let default = format!("{i}.png");
            CameraRecord::from_camera(i as u32, cam, (*name != default).then(|| name.clone()))
        })
        .collect();
    write_cameras(&dir.join("cameras.json"), &records)?;
    for (img, name) in ds.images.iter().zip(&ds.image_names) {
        save_png(img, &dir.join("images").join(name))?;
    }
    write_points(&dir.join("points3d.ply"), &ds.init_points)
}

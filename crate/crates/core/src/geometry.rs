//! Camera models and conversions between disparity, depth, organized point
//! clouds, and image-plane projections.
//!
//! The camera frame follows the KITTI convention: x right, y down, z forward.
//! Yaw is a rotation about the y axis. Invalid pixels are carried in an
//! explicit validity mask; sentinel values never enter downstream statistics.

use std::io::Read;
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// Pinhole intrinsics of a rectified camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    /// Focal length in pixels, x direction.
    pub fx: f64,
    /// Focal length in pixels, y direction.
    pub fy: f64,
    /// Principal point x in pixels.
    pub cx: f64,
    /// Principal point y in pixels.
    pub cy: f64,
    /// Image width in pixels.
    pub width: usize,
    /// Image height in pixels.
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Config(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::Config(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }
}

/// A rectified stereo pair: shared intrinsics plus the baseline in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    pub intrinsics: CameraIntrinsics,
    /// Distance between the two camera centers, meters.
    pub baseline: f64,
}

impl StereoRig {
    pub fn new(intrinsics: CameraIntrinsics, baseline: f64) -> Result<Self> {
        if baseline <= 0.0 {
            return Err(Error::Config(format!(
                "stereo baseline must be positive, got {baseline}"
            )));
        }
        Ok(Self {
            intrinsics,
            baseline,
        })
    }
}

/// Per-pixel depth along the optical axis, meters, with a validity mask.
///
/// Invalid cells hold 0.0 and are excluded from all downstream statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub values: Array2<f64>,
    pub validity: Array2<bool>,
}

/// Per-pixel stereo disparity in pixels, with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    pub values: Array2<f64>,
    pub validity: Array2<bool>,
}

/// Per-pixel 3D points in the camera frame, kept in the image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OrganizedPointCloud {
    /// `(height, width, 3)` grid of (x, y, z) in meters.
    pub points: Array3<f64>,
    pub validity: Array2<bool>,
}

impl DepthMap {
    /// Build a depth map, marking non-finite or non-positive cells invalid.
    pub fn new(values: Array2<f64>, validity: Array2<bool>) -> Result<Self> {
        if values.dim() != validity.dim() {
            return Err(Error::Config(format!(
                "depth values {:?} vs validity {:?}",
                values.dim(),
                validity.dim()
            )));
        }
        let mut values = values;
        let mut validity = validity;
        for ((r, c), v) in validity.indexed_iter_mut() {
            let z = values[(r, c)];
            if *v && !(z.is_finite() && z > 0.0) {
                *v = false;
            }
            if !*v {
                values[(r, c)] = 0.0;
            }
        }
        Ok(Self { values, validity })
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

impl DisparityMap {
    /// Build a disparity map, marking non-finite or non-positive cells invalid.
    pub fn new(values: Array2<f64>, validity: Array2<bool>) -> Result<Self> {
        if values.dim() != validity.dim() {
            return Err(Error::Config(format!(
                "disparity values {:?} vs validity {:?}",
                values.dim(),
                validity.dim()
            )));
        }
        let mut values = values;
        let mut validity = validity;
        for ((r, c), v) in validity.indexed_iter_mut() {
            let d = values[(r, c)];
            if *v && !(d.is_finite() && d > 0.0) {
                *v = false;
            }
            if !*v {
                values[(r, c)] = 0.0;
            }
        }
        Ok(Self { values, validity })
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

impl OrganizedPointCloud {
    pub fn height(&self) -> usize {
        self.validity.nrows()
    }

    pub fn width(&self) -> usize {
        self.validity.ncols()
    }

    /// The (x, y, z) point stored at pixel `(row, col)`, regardless of validity.
    pub fn point(&self, row: usize, col: usize) -> [f64; 3] {
        [
            self.points[(row, col, 0)],
            self.points[(row, col, 1)],
            self.points[(row, col, 2)],
        ]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.validity[(row, col)]
    }
}

/// Convert a disparity map to depth via `z = fx * baseline / d`.
///
/// Cells with invalid or non-positive disparity become invalid depth.
pub fn disparity_to_depth(disp: &DisparityMap, rig: &StereoRig) -> Result<DepthMap> {
    let (h, w) = disp.values.dim();
    if h != rig.intrinsics.height || w != rig.intrinsics.width {
        return Err(Error::Config(format!(
            "disparity map {h}x{w} does not match {}x{} intrinsics",
            rig.intrinsics.height, rig.intrinsics.width
        )));
    }
    let mut values = Array2::zeros((h, w));
    let mut validity = Array2::from_elem((h, w), false);
    let fx_b = rig.intrinsics.fx * rig.baseline;
    for ((r, c), &d) in disp.values.indexed_iter() {
        if disp.validity[(r, c)] && d > 0.0 {
            values[(r, c)] = fx_b / d;
            validity[(r, c)] = true;
        }
    }
    Ok(DepthMap { values, validity })
}

/// Back-project a depth map into an organized point cloud.
///
/// Pixel `(u, v)` with depth `z` maps to `x = (u - cx) z / fx`,
/// `y = (v - cy) z / fy`. The validity mask is preserved bit-for-bit.
pub fn backproject(depth: &DepthMap, k: &CameraIntrinsics) -> Result<OrganizedPointCloud> {
    let (h, w) = depth.values.dim();
    if h != k.height || w != k.width {
        return Err(Error::Config(format!(
            "depth map {h}x{w} does not match {}x{} intrinsics",
            k.height, k.width
        )));
    }
    let mut points = Array3::zeros((h, w, 3));
    for ((r, c), &z) in depth.values.indexed_iter() {
        if depth.validity[(r, c)] {
            let u = c as f64;
            let v = r as f64;
            points[(r, c, 0)] = (u - k.cx) * z / k.fx;
            points[(r, c, 1)] = (v - k.cy) * z / k.fy;
            points[(r, c, 2)] = z;
        }
    }
    Ok(OrganizedPointCloud {
        points,
        validity: depth.validity.clone(),
    })
}

/// Project a camera-frame point to the image plane.
///
/// The result may lie outside the image bounds; the caller clips.
pub fn project(point: [f64; 3], k: &CameraIntrinsics) -> Result<(f64, f64)> {
    let [x, y, z] = point;
    if z <= 0.0 {
        return Err(Error::BehindCamera { z });
    }
    Ok((k.fx * x / z + k.cx, k.fy * y / z + k.cy))
}

/// Kind tag stored in the grid-file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Depth = 0,
    Disparity = 1,
}

const GRID_MAGIC: &[u8; 4] = b"LFD1";

/// Write a dense grid file: magic "LFD1", u32 height, u32 width, u8 kind,
/// then `h * w` little-endian f32 values row-major. NaN encodes invalid.
pub fn write_grid_file(
    path: &Path,
    values: &Array2<f64>,
    validity: &Array2<bool>,
    kind: GridKind,
) -> Result<()> {
    let (h, w) = values.dim();
    if validity.dim() != (h, w) {
        return Err(Error::Config("grid values/validity shape mismatch".into()));
    }
    let mut buf = Vec::with_capacity(13 + h * w * 4);
    buf.extend_from_slice(GRID_MAGIC);
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    buf.push(kind as u8);
    for ((r, c), &v) in values.indexed_iter() {
        let x = if validity[(r, c)] { v as f32 } else { f32::NAN };
        buf.extend_from_slice(&x.to_le_bytes());
    }
    crate::atomic_write(path, &buf)
}

/// Read a grid file written by [`write_grid_file`].
///
/// Returns the values, validity mask, and the kind tag. NaN cells are invalid.
pub fn read_grid_file(path: &Path) -> Result<(Array2<f64>, Array2<bool>, GridKind)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 13 || &bytes[0..4] != GRID_MAGIC {
        return Err(Error::format(0, format!("{}: not an LFD1 grid file", path.display())));
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let kind = match bytes[12] {
        0 => GridKind::Depth,
        1 => GridKind::Disparity,
        k => {
            return Err(Error::format(0, format!("unknown grid kind tag {k}")));
        }
    };
    let expected = 13 + h * w * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            0,
            format!(
                "{}: expected {expected} bytes for {h}x{w} grid, found {}",
                path.display(),
                bytes.len()
            ),
        ));
    }
    let mut values = Array2::zeros((h, w));
    let mut validity = Array2::from_elem((h, w), false);
    for r in 0..h {
        for c in 0..w {
            let off = 13 + (r * w + c) * 4;
            let x = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            if x.is_finite() {
                values[(r, c)] = x as f64;
                validity[(r, c)] = true;
            }
        }
    }
    Ok((values, validity, kind))
}

/// Load a depth map from an LFD1 grid file, checking the kind tag.
pub fn read_depth_file(path: &Path) -> Result<DepthMap> {
    let (values, validity, kind) = read_grid_file(path)?;
    if kind != GridKind::Depth {
        return Err(Error::format(0, format!("{}: not a depth grid", path.display())));
    }
    DepthMap::new(values, validity)
}

/// Load a disparity map from an LFD1 grid file, checking the kind tag.
pub fn read_disparity_file(path: &Path) -> Result<DisparityMap> {
    let (values, validity, kind) = read_grid_file(path)?;
    if kind != GridKind::Disparity {
        return Err(Error::format(0, format!("{}: not a disparity grid", path.display())));
    }
    DisparityMap::new(values, validity)
}

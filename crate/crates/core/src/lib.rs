//! Lifting 2D detections to 3D bounding boxes.
//!
//! The pipeline works on *organized point clouds*: per-pixel 3D points kept in
//! the image grid so that ordinary 2D convolutions apply. A 2D detection
//! selects a region of interest, the ROI's semantic one-hot channels and xyz
//! channels are stacked and resized to a fixed 64x64 input, and a
//! batch-norm-free residual network regresses the 3D box relative to simple
//! priors (the ROI's central 3D point and per-class mean dimensions).
//!
//! Modules:
//! - [`geometry`]: camera models, disparity/depth conversion, back-projection.
//! - [`boxes`]: 2D/3D box types, rotated BEV and 3D IoU, orientation similarity.
//! - [`encoding`]: box <-> regression-target mappings (deltas, bins, one-hots).
//! - [`roipipe`]: ROI tensor assembly and 2D-box jitter augmentation.
//! - [`nettrain`]: the lifting network, multi-task loss, backprop, training.
//! - [`evalkit`]: KITTI-format label I/O and AP/AOS evaluation.
//! - [`synthdata`]: procedural scene generation and depth rendering.

pub mod boxes;
pub mod encoding;
pub mod error;
pub mod evalkit;
pub mod geometry;
pub mod nettrain;
pub mod pipeline;
pub mod roipipe;
pub mod synthdata;

pub use error::{Error, Result};

/// Write a file through a temporary sibling plus rename, so readers never
/// observe a partially written artifact.
pub fn atomic_write(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| std::path::Path::new("."));
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Wrap an angle into the canonical interval `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::wrap_angle;
    use std::f64::consts::PI;

    #[test]
    fn wrap_angle_canonical_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        // tiny negative angles stay tiny (rounding near 2*pi allowed)
        assert!(wrap_angle(-1e-15).abs() < 1e-14);
        for k in -5..=5 {
            let a = 0.37 + 2.0 * PI * k as f64;
            assert!((wrap_angle(a) - 0.37).abs() < 1e-9, "k={k}");
        }
    }
}

//! Procedural scenes of oriented cuboids on a ground plane, rendered to
//! depth maps, semantic masks, and KITTI labels. These stand in for the
//! upstream depth/segmentation/detection networks at desk scale.

mod dataset;
mod render;

pub use dataset::{
    export_kitti, generate_dataset, load_dataset_index, read_calib, write_calib, CalibInfo,
    DatasetIndex, FrameEntry,
};
pub use render::{render, RenderOutput, RenderedObject};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::boxes::{iou_bev, Box3D};
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

/// Shape distribution of one object class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub name: String,
    /// Mean (h, w, l) in meters.
    pub dim_mean: [f64; 3],
    /// Per-component standard deviation, meters.
    pub dim_sigma: [f64; 3],
}

/// Scene generator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub intrinsics: CameraIntrinsics,
    /// Stereo baseline recorded in calib files, meters.
    pub baseline: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    pub classes: Vec<ClassSpec>,
    /// Object centers are placed with z in this range, meters.
    pub depth_range: (f64, f64),
    /// Hard cap on |x| of object centers, meters.
    pub lateral_extent: f64,
    /// Ground plane y in the camera frame (camera height above ground).
    pub ground_y: f64,
    /// Yaw drawn uniformly from this range, radians.
    pub yaw_range: (f64, f64),
    /// Gaussian depth noise sigma, meters.
    pub depth_noise_sigma: f64,
    /// Probability of flipping a foreground semantic label to background.
    pub label_flip_rate: f64,
    pub seed: u64,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let (z0, z1) = self.depth_range;
        if !(z0 > 1.0 && z1 < 100.0 && z0 < z1) {
            return Err(Error::Config(format!(
                "depth range ({z0}, {z1}) must lie within (1, 100)"
            )));
        }
        if self.depth_noise_sigma < 0.0 {
            return Err(Error::Config("depth noise sigma must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.label_flip_rate) {
            return Err(Error::Config("label flip rate must be in [0, 1]".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::Config("at least one object class required".into()));
        }
        if self.min_objects > self.max_objects {
            return Err(Error::Config(format!(
                "object count range {}..{} is empty",
                self.min_objects, self.max_objects
            )));
        }
        for c in &self.classes {
            if c.dim_mean.iter().any(|&d| d <= 0.0) || c.dim_sigma.iter().any(|&s| s < 0.0) {
                return Err(Error::Config(format!("bad class spec {c:?}")));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::new(210.0, 210.0, 128.0, 96.0, 256, 192)
                .expect("default intrinsics"),
            baseline: 0.54,
            min_objects: 1,
            max_objects: 3,
            classes: vec![
                ClassSpec {
                    name: "Car".into(),
                    dim_mean: [1.5, 1.8, 4.0],
                    dim_sigma: [0.1, 0.1, 0.3],
                },
                ClassSpec {
                    name: "Pedestrian".into(),
                    dim_mean: [1.75, 0.6, 0.8],
                    dim_sigma: [0.1, 0.05, 0.05],
                },
            ],
            depth_range: (5.0, 14.0),
            lateral_extent: 6.0,
            ground_y: 1.6,
            yaw_range: (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
            depth_noise_sigma: 0.0,
            label_flip_rate: 0.0,
            seed: 0,
        }
    }
}

/// One placed object.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub class_id: usize,
    pub box3d: Box3D,
}

/// A sampled scene: camera plus ground-truth cuboids.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub intrinsics: CameraIntrinsics,
    pub baseline: f64,
    pub ground_y: f64,
    pub objects: Vec<SceneObject>,
}

/// Draw a scene: objects with class-conditional dimensions, resting on the
/// ground plane, non-overlapping in BEV, fully beyond the near depth bound.
///
/// Rejection sampling is bounded at 100 attempts per object; saturation
/// yields fewer objects, never an error.
pub fn sample_scene(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<SyntheticScene> {
    cfg.validate()?;
    let count = rng.random_range(cfg.min_objects..=cfg.max_objects);
    let mut objects: Vec<SceneObject> = Vec::with_capacity(count);
    let k = &cfg.intrinsics;
    for _ in 0..count {
        'attempts: for _ in 0..100 {
            let class_id = rng.random_range(0..cfg.classes.len());
            let spec = &cfg.classes[class_id];
            let mut dims = [0.0; 3];
            for i in 0..3 {
                let draw: f64 = rng.sample(
                    rand_distr::Normal::new(spec.dim_mean[i], spec.dim_sigma[i])
                        .expect("valid normal"),
                );
                dims[i] = draw.max(0.3 * spec.dim_mean[i]);
            }
            let yaw = rng.random_range(cfg.yaw_range.0..=cfg.yaw_range.1);
            // keep the whole footprint beyond the near bound
            let half_diag = (dims[1] * dims[1] + dims[2] * dims[2]).sqrt() / 2.0;
            let z_lo = cfg.depth_range.0 + half_diag;
            let z_hi = cfg.depth_range.1;
            if z_lo >= z_hi {
                continue 'attempts;
            }
            let z = rng.random_range(z_lo..z_hi);
            // stay well inside the viewing frustum
            let frustum_x = 0.75 * z * (k.cx / k.fx).min((k.width as f64 - k.cx) / k.fx);
            let x_max = cfg.lateral_extent.min(frustum_x);
            let x = rng.random_range(-x_max..=x_max);
            let candidate = Box3D::new([x, cfg.ground_y, z], dims, yaw)?;
            if objects.iter().any(|o| iou_bev(&o.box3d, &candidate) > 0.0) {
                continue 'attempts;
            }
            objects.push(SceneObject {
                class_id,
                box3d: candidate,
            });
            break 'attempts;
        }
    }
    Ok(SyntheticScene {
        intrinsics: cfg.intrinsics,
        baseline: cfg.baseline,
        ground_y: cfg.ground_y,
        objects,
    })
}

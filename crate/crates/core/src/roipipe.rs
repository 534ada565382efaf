//! Network-input assembly: semantic one-hot channels concatenated with xyz
//! channels over each ROI, resized to a fixed 64x64; plus the 2D-box jitter
//! augmentation used during training.
//!
//! All channels are resampled with nearest-neighbor. Bilinear blending of xyz
//! across depth discontinuities would create phantom 3D points, and the
//! semantic channels have to stay one-hot.

use std::io::Read;
use std::path::Path;

use ndarray::{Array2, Array3};
use rand::Rng;

use crate::boxes::{Box2D, Detection2D};
use crate::encoding::{
    central_pixel_prior, class_one_hot, encode_targets, roi_pixel_range, CentralPrior,
    ClassPriors, OrientationBins, TargetVector,
};
use crate::error::{Error, Result};
use crate::geometry::OrganizedPointCloud;

/// Side length of the resized network input.
pub const ROI_SIZE: usize = 64;

/// Per-pixel semantic class labels; 0 is background, 1..=C are foreground.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMask {
    pub labels: Array2<u8>,
    /// Number of foreground classes C.
    pub num_classes: usize,
}

impl SemanticMask {
    pub fn new(labels: Array2<u8>, num_classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l as usize > num_classes) {
            return Err(Error::Config(format!(
                "semantic label {bad} exceeds {num_classes} classes"
            )));
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    pub fn height(&self) -> usize {
        self.labels.nrows()
    }

    pub fn width(&self) -> usize {
        self.labels.ncols()
    }
}

/// An ROI crop at source resolution: `(h, w, C+3)` with the channel layout
/// `[C one-hot semantic channels, x, y, z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiStack {
    pub data: Array3<f64>,
    /// Validity of the coordinate channels.
    pub validity: Array2<bool>,
    pub num_classes: usize,
}

/// The fixed-size network input tensor, `64 x 64 x (C+3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiTensor {
    pub data: Array3<f64>,
    pub validity: Array2<bool>,
    pub num_classes: usize,
}

impl RoiTensor {
    pub fn channels(&self) -> usize {
        self.data.dim().2
    }
}

/// Box-jitter augmentation parameters. The paper's ranges correspond to
/// `jitter_fraction = 0.25`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub jitter_fraction: f64,
    pub seed: u64,
}

impl AugmentConfig {
    pub fn new(jitter_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..0.5).contains(&jitter_fraction) {
            return Err(Error::Config(format!(
                "jitter fraction {jitter_fraction} not in [0, 0.5)"
            )));
        }
        Ok(Self {
            jitter_fraction,
            seed,
        })
    }
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            jitter_fraction: 0.25,
            seed: 0,
        }
    }
}

/// Crop the ROI from the cloud and semantic mask and stack the channels.
///
/// Semantic labels expand to one-hot over the C foreground classes
/// (background rows are all-zero); xyz is copied with its validity mask,
/// invalid cells carrying 0 in the tensor.
pub fn crop_concat(
    cloud: &OrganizedPointCloud,
    sem: &SemanticMask,
    roi: &Box2D,
) -> Result<RoiStack> {
    if (sem.height(), sem.width()) != (cloud.height(), cloud.width()) {
        return Err(Error::Config(format!(
            "semantic mask {}x{} vs cloud {}x{}",
            sem.height(),
            sem.width(),
            cloud.height(),
            cloud.width()
        )));
    }
    let (r0, r1, c0, c1) =
        roi_pixel_range(roi, cloud.width(), cloud.height()).ok_or(Error::EmptyRoi)?;
    let (h, w) = (r1 - r0, c1 - c0);
    let channels = sem.num_classes + 3;
    let mut data = Array3::zeros((h, w, channels));
    let mut validity = Array2::from_elem((h, w), false);
    for r in 0..h {
        for c in 0..w {
            let label = sem.labels[(r0 + r, c0 + c)] as usize;
            if label > 0 {
                data[(r, c, label - 1)] = 1.0;
            }
            if cloud.is_valid(r0 + r, c0 + c) {
                let p = cloud.point(r0 + r, c0 + c);
                for i in 0..3 {
                    data[(r, c, sem.num_classes + i)] = p[i];
                }
                validity[(r, c)] = true;
            }
        }
    }
    Ok(RoiStack {
        data,
        validity,
        num_classes: sem.num_classes,
    })
}

/// Source index for nearest-neighbor resampling: the input cell containing
/// the center of output cell `i`, clamped to the input range.
fn nearest_index(i: usize, n_out: usize, n_in: usize) -> usize {
    let src = ((i as f64 + 0.5) * n_in as f64 / n_out as f64).floor() as usize;
    src.min(n_in - 1)
}

/// Resize an ROI stack to `64 x 64` with nearest-neighbor sampling on all
/// channels; the validity mask is resampled through the same index map.
pub fn resize_to_64(stack: &RoiStack) -> RoiTensor {
    let (h, w, channels) = stack.data.dim();
    let mut data = Array3::zeros((ROI_SIZE, ROI_SIZE, channels));
    let mut validity = Array2::from_elem((ROI_SIZE, ROI_SIZE), false);
    for i in 0..ROI_SIZE {
        let r = nearest_index(i, ROI_SIZE, h);
        for j in 0..ROI_SIZE {
            let c = nearest_index(j, ROI_SIZE, w);
            for k in 0..channels {
                data[(i, j, k)] = stack.data[(r, c, k)];
            }
            validity[(i, j)] = stack.validity[(r, c)];
        }
    }
    RoiTensor {
        data,
        validity,
        num_classes: stack.num_classes,
    }
}

/// Randomly shift the four box edges by up to `jitter_fraction` of the box
/// extent, clipping to the image bounds.
///
/// Degenerate draws are resampled, bounded at 100 attempts before returning
/// the original box.
pub fn jitter_box<R: Rng + ?Sized>(
    roi: &Box2D,
    image_width: usize,
    image_height: usize,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Box2D {
    if cfg.jitter_fraction == 0.0 {
        return *roi;
    }
    let h = roi.height();
    let w = roi.width();
    let dh = cfg.jitter_fraction * h;
    let dw = cfg.jitter_fraction * w;
    for _ in 0..100 {
        let u1 = roi.u1 + rng.random_range(-dw..=dw);
        let u2 = roi.u2 + rng.random_range(-dw..=dw);
        let v1 = roi.v1 + rng.random_range(-dh..=dh);
        let v2 = roi.v2 + rng.random_range(-dh..=dh);
        let u1 = u1.clamp(0.0, image_width as f64);
        let u2 = u2.clamp(0.0, image_width as f64);
        let v1 = v1.clamp(0.0, image_height as f64);
        let v2 = v2.clamp(0.0, image_height as f64);
        if u2 > u1 && v2 > v1 {
            return Box2D { u1, v1, u2, v2 };
        }
    }
    *roi
}

/// The four-input tuple consumed by the lifting network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub tensor: RoiTensor,
    pub p_m: [f64; 3],
    pub class_onehot: Vec<f64>,
    pub d_prior: [f64; 3],
}

/// Assemble the model input for one detection; with a ground-truth box the
/// regression targets are emitted as well.
pub fn build_sample(
    cloud: &OrganizedPointCloud,
    sem: &SemanticMask,
    det: &Detection2D,
    priors: &ClassPriors,
    bins: &OrientationBins,
    num_classes: usize,
    gt: Option<&crate::boxes::Box3D>,
) -> Result<(ModelInput, Option<TargetVector>)> {
    let stack = crop_concat(cloud, sem, &det.box2d)?;
    let tensor = resize_to_64(&stack);
    let prior = central_pixel_prior(cloud, &det.box2d)?;
    let d_prior = priors.get(det.class_id)?;
    let class_onehot = class_one_hot(det.class_id, num_classes)?;
    let target = gt
        .map(|g| encode_targets(g, &prior, det.class_id, priors, bins))
        .transpose()?;
    Ok((
        ModelInput {
            tensor,
            p_m: prior.p_m,
            class_onehot,
            d_prior,
        },
        target,
    ))
}

/// Central prior for a detection, re-exported at the pipeline level for
/// decoding predictions back into boxes.
pub fn sample_prior(cloud: &OrganizedPointCloud, det: &Detection2D) -> Result<CentralPrior> {
    central_pixel_prior(cloud, &det.box2d)
}

const PGM_MAX: usize = 255;

/// Write a semantic mask as binary PGM (P5), one byte per label.
pub fn write_pgm(path: &Path, mask: &SemanticMask) -> Result<()> {
    let (h, w) = mask.labels.dim();
    let mut buf = format!("P5\n{w} {h}\n{PGM_MAX}\n").into_bytes();
    buf.extend(mask.labels.iter().copied());
    crate::atomic_write(path, &buf)
}

/// Read a binary PGM (P5) semantic mask with labels in `0..=num_classes`.
pub fn read_pgm(path: &Path, num_classes: usize) -> Result<SemanticMask> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let mut tokens = Vec::new();
    // header: magic, width, height, maxval; '#' starts a comment
    while tokens.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos > start {
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
    }
    if tokens.len() < 4 || tokens[0] != "P5" {
        return Err(Error::format(0, format!("{}: not a binary PGM", path.display())));
    }
    let w: usize = tokens[1]
        .parse()
        .map_err(|_| Error::format(0, "bad PGM width"))?;
    let h: usize = tokens[2]
        .parse()
        .map_err(|_| Error::format(0, "bad PGM height"))?;
    let maxval: usize = tokens[3]
        .parse()
        .map_err(|_| Error::format(0, "bad PGM maxval"))?;
    if maxval == 0 || maxval > PGM_MAX {
        return Err(Error::format(0, format!("unsupported PGM maxval {maxval}")));
    }
    pos += 1; // single whitespace after maxval
    if bytes.len() < pos + h * w {
        return Err(Error::format(
            0,
            format!("{}: truncated PGM payload", path.display()),
        ));
    }
    let labels = Array2::from_shape_vec((h, w), bytes[pos..pos + h * w].to_vec())
        .expect("shape matches payload");
    SemanticMask::new(labels, num_classes)
}

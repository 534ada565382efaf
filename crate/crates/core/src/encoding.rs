//! Bidirectional mapping between 3D boxes and network regression targets:
//! location deltas from the central-pixel prior, dimension deltas from class
//! priors, bin-plus-residual orientation encoding, and class one-hot vectors.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use crate::boxes::{Box2D, Box3D};
use crate::error::{Error, Result};
use crate::geometry::OrganizedPointCloud;
use crate::wrap_angle;

/// Smallest box dimension produced by [`decode_prediction`], meters.
pub const MIN_DECODED_DIM: f64 = 0.1;

/// Per-class canonical (h, w, l) dimensions in meters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassPriors {
    dims: BTreeMap<usize, [f64; 3]>,
}

impl ClassPriors {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, class_id: usize, dims: [f64; 3]) -> Result<()> {
        if !(dims[0] > 0.0 && dims[1] > 0.0 && dims[2] > 0.0) {
            return Err(Error::Config(format!(
                "non-positive prior dims {dims:?} for class {class_id}"
            )));
        }
        self.dims.insert(class_id, dims);
        Ok(())
    }

    pub fn get(&self, class_id: usize) -> Result<[f64; 3]> {
        self.dims
            .get(&class_id)
            .copied()
            .ok_or(Error::UnknownClass(class_id))
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, [f64; 3])> + '_ {
        self.dims.iter().map(|(&k, &v)| (k, v))
    }

    /// Per-class mean dimensions of a label set, the default prior source.
    pub fn from_labels(labels: impl IntoIterator<Item = (usize, [f64; 3])>) -> Self {
        let mut sums: BTreeMap<usize, ([f64; 3], usize)> = BTreeMap::new();
        for (class_id, d) in labels {
            let e = sums.entry(class_id).or_insert(([0.0; 3], 0));
            for i in 0..3 {
                e.0[i] += d[i];
            }
            e.1 += 1;
        }
        let dims = sums
            .into_iter()
            .map(|(k, (s, n))| (k, [s[0] / n as f64, s[1] / n as f64, s[2] / n as f64]))
            .collect();
        Self { dims }
    }

    /// Serialize as a plain-text table: one "class_id h w l" row per class.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (k, d) in self.iter() {
            out.push_str(&format!("{k} {} {} {}\n", d[0], d[1], d[2]));
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut priors = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::format(
                    i + 1,
                    format!("expected 'class_id h w l', found {} fields", fields.len()),
                ));
            }
            let class_id: usize = fields[0]
                .parse()
                .map_err(|_| Error::format(i + 1, format!("bad class id {:?}", fields[0])))?;
            let mut dims = [0.0; 3];
            for (j, f) in fields[1..].iter().enumerate() {
                dims[j] = f
                    .parse()
                    .map_err(|_| Error::format(i + 1, format!("bad dimension {f:?}")))?;
            }
            priors.insert(class_id, dims).map_err(|e| match e {
                Error::Config(msg) => Error::format(i + 1, msg),
                other => other,
            })?;
        }
        Ok(priors)
    }

    pub fn write_table(&self, path: &Path) -> Result<()> {
        crate::atomic_write(path, self.to_table().as_bytes())
    }

    pub fn read_table(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_table(&text)
    }
}

/// Evenly spaced orientation bins covering `(-pi, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationBins {
    centers: Vec<f64>,
}

impl OrientationBins {
    /// `count` centers with spacing `2*pi/count`; `count = 2` gives {0, pi}.
    pub fn new(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::Config(format!("need at least 2 bins, got {count}")));
        }
        let spacing = 2.0 * PI / count as f64;
        let centers = (0..count).map(|i| -PI + spacing * (i + 1) as f64).collect();
        Ok(Self { centers })
    }

    pub fn count(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn half_width(&self) -> f64 {
        PI / self.count() as f64
    }
}

impl Default for OrientationBins {
    fn default() -> Self {
        Self::new(2).expect("2 bins")
    }
}

/// Ground-truth regression/classification targets for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    /// Location deviation from the central-pixel prior, meters.
    pub delta_p: [f64; 3],
    /// Dimension deviation from the class prior, meters.
    pub delta_d: [f64; 3],
    /// Index of the orientation bin.
    pub bin: usize,
    /// One-hot over bins, redundant with `bin` but kept in target layout.
    pub bin_onehot: Vec<f64>,
    /// Residual angle within the bin, `(-pi/B, pi/B]`.
    pub theta_reg: f64,
}

/// The 3D point used as the location anchor for one ROI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralPrior {
    pub p_m: [f64; 3],
}

/// Pixel region of the cloud grid covered by a 2D box: rows `r0..r1`,
/// columns `c0..c1`, clipped to the grid.
pub(crate) fn roi_pixel_range(
    roi: &Box2D,
    width: usize,
    height: usize,
) -> Option<(usize, usize, usize, usize)> {
    let c0 = roi.u1.floor().max(0.0) as usize;
    let r0 = roi.v1.floor().max(0.0) as usize;
    let c1 = (roi.u2.ceil() as isize).clamp(0, width as isize) as usize;
    let r1 = (roi.v2.ceil() as isize).clamp(0, height as isize) as usize;
    if c0 >= c1 || r0 >= r1 || c0 >= width || r0 >= height {
        None
    } else {
        Some((r0, r1, c0, c1))
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// The 3D point at the ROI's integer center pixel, or the per-coordinate
/// median of valid ROI points when the center pixel is invalid.
///
/// The center pixel is `(floor((u1+u2)/2), floor((v1+v2)/2))` clipped to the
/// grid. Depth holes make the strict center unreliable, hence the fallback.
pub fn central_pixel_prior(cloud: &OrganizedPointCloud, roi: &Box2D) -> Result<CentralPrior> {
    let (h, w) = (cloud.height(), cloud.width());
    let (r0, r1, c0, c1) = roi_pixel_range(roi, w, h).ok_or(Error::EmptyRoi)?;
    let cc = (((roi.u1 + roi.u2) / 2.0).floor() as isize).clamp(c0 as isize, c1 as isize - 1) as usize;
    let cr = (((roi.v1 + roi.v2) / 2.0).floor() as isize).clamp(r0 as isize, r1 as isize - 1) as usize;
    if cloud.is_valid(cr, cc) {
        return Ok(CentralPrior {
            p_m: cloud.point(cr, cc),
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut zs = Vec::new();
    for r in r0..r1 {
        for c in c0..c1 {
            if cloud.is_valid(r, c) {
                let [x, y, z] = cloud.point(r, c);
                xs.push(x);
                ys.push(y);
                zs.push(z);
            }
        }
    }
    if xs.is_empty() {
        return Err(Error::EmptyRoi);
    }
    Ok(CentralPrior {
        p_m: [median(&mut xs), median(&mut ys), median(&mut zs)],
    })
}

/// Nearest bin under circular distance plus the wrapped residual.
///
/// The residual lies in `(-pi/B, pi/B]`; at an exact tie between two centers
/// the lower-index bin wins, leaving residual `+pi/B`.
pub fn encode_orientation(theta: f64, bins: &OrientationBins) -> (usize, f64) {
    let half = bins.half_width();
    for (i, &c) in bins.centers().iter().enumerate() {
        let r = wrap_angle(theta - c);
        if r > -half && r <= half {
            return (i, r);
        }
    }
    // The half-open intervals tile the circle, so this is unreachable for
    // finite theta; fall back to bin 0 defensively.
    (0, wrap_angle(theta - bins.centers()[0]))
}

/// Inverse of [`encode_orientation`]: `wrap(center + residual)`.
pub fn decode_orientation(bin: usize, residual: f64, bins: &OrientationBins) -> Result<f64> {
    let centers = bins.centers();
    if bin >= centers.len() {
        return Err(Error::IndexOutOfRange(format!(
            "bin {bin} with {} bins",
            centers.len()
        )));
    }
    Ok(wrap_angle(centers[bin] + residual))
}

/// One-hot basis vector of length `num_classes`.
pub fn class_one_hot(class_id: usize, num_classes: usize) -> Result<Vec<f64>> {
    if class_id >= num_classes {
        return Err(Error::IndexOutOfRange(format!(
            "class {class_id} with {num_classes} classes"
        )));
    }
    let mut v = vec![0.0; num_classes];
    v[class_id] = 1.0;
    Ok(v)
}

/// Build the regression/classification target for one ground-truth box.
pub fn encode_targets(
    gt: &Box3D,
    prior: &CentralPrior,
    class_id: usize,
    priors: &ClassPriors,
    bins: &OrientationBins,
) -> Result<TargetVector> {
    let d_prior = priors.get(class_id)?;
    let delta_p = [
        gt.center[0] - prior.p_m[0],
        gt.center[1] - prior.p_m[1],
        gt.center[2] - prior.p_m[2],
    ];
    let delta_d = [
        gt.dims[0] - d_prior[0],
        gt.dims[1] - d_prior[1],
        gt.dims[2] - d_prior[2],
    ];
    let (bin, theta_reg) = encode_orientation(gt.yaw, bins);
    let mut bin_onehot = vec![0.0; bins.count()];
    bin_onehot[bin] = 1.0;
    Ok(TargetVector {
        delta_p,
        delta_d,
        bin,
        bin_onehot,
        theta_reg,
    })
}

/// Raw head outputs for one sample, as produced by the network.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutputs {
    pub delta_p: [f64; 3],
    pub delta_d: [f64; 3],
    /// Unnormalized bin scores, length B.
    pub bin_logits: Vec<f64>,
    /// Per-bin residual angles, length B; the argmax bin's entry is used.
    pub theta_reg: Vec<f64>,
}

/// Invert the target encoding into a 3D box.
///
/// Dimensions are clamped to at least [`MIN_DECODED_DIM`] so early-training
/// predictions cannot produce non-physical boxes.
pub fn decode_prediction(
    out: &PredictionOutputs,
    prior: &CentralPrior,
    class_id: usize,
    priors: &ClassPriors,
    bins: &OrientationBins,
) -> Result<Box3D> {
    let d_prior = priors.get(class_id)?;
    if out.bin_logits.len() != bins.count() || out.theta_reg.len() != bins.count() {
        return Err(Error::Config(format!(
            "orientation outputs ({} logits, {} residuals) vs {} bins",
            out.bin_logits.len(),
            out.theta_reg.len(),
            bins.count()
        )));
    }
    let center = [
        prior.p_m[0] + out.delta_p[0],
        prior.p_m[1] + out.delta_p[1],
        prior.p_m[2] + out.delta_p[2],
    ];
    let dims = [
        (d_prior[0] + out.delta_d[0]).max(MIN_DECODED_DIM),
        (d_prior[1] + out.delta_d[1]).max(MIN_DECODED_DIM),
        (d_prior[2] + out.delta_d[2]).max(MIN_DECODED_DIM),
    ];
    let best_bin = out
        .bin_logits
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let yaw = decode_orientation(best_bin, out.theta_reg[best_bin], bins)?;
    Box3D::new(center, dims, yaw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud_from_points(points: Vec<((usize, usize), [f64; 3])>, h: usize, w: usize) -> OrganizedPointCloud {
        let mut grid = Array3::zeros((h, w, 3));
        let mut validity = Array2::from_elem((h, w), false);
        for ((r, c), p) in points {
            for i in 0..3 {
                grid[(r, c, i)] = p[i];
            }
            validity[(r, c)] = true;
        }
        OrganizedPointCloud {
            points: grid,
            validity,
        }
    }

    fn default_priors() -> ClassPriors {
        let mut p = ClassPriors::new();
        p.insert(0, [1.5, 1.8, 4.0]).unwrap();
        p.insert(1, [1.75, 0.6, 0.8]).unwrap();
        p
    }

    #[test]
    fn central_prior_reads_center_pixel() {
        let cloud = cloud_from_points(vec![((5, 5), [1.0, 2.0, 10.0])], 10, 10);
        let roi = Box2D::new(2.0, 2.0, 9.0, 9.0).unwrap();
        let prior = central_pixel_prior(&cloud, &roi).unwrap();
        assert_eq!(prior.p_m, [1.0, 2.0, 10.0]);
    }

    #[test]
    fn central_prior_median_fallback() {
        let cloud = cloud_from_points(
            vec![
                ((0, 0), [0.0, 0.0, 4.0]),
                ((0, 1), [0.0, 0.0, 6.0]),
                ((1, 0), [0.0, 0.0, 8.0]),
            ],
            4,
            4,
        );
        // center pixel (1,1) invalid
        let roi = Box2D::new(0.0, 0.0, 3.0, 3.0).unwrap();
        let prior = central_pixel_prior(&cloud, &roi).unwrap();
        assert_eq!(prior.p_m, [0.0, 0.0, 6.0]);
    }

    #[test]
    fn central_prior_empty_roi_errors() {
        let cloud = cloud_from_points(vec![], 8, 8);
        let roi = Box2D::new(1.0, 1.0, 6.0, 6.0).unwrap();
        assert!(matches!(
            central_pixel_prior(&cloud, &roi),
            Err(Error::EmptyRoi)
        ));
        // fully outside the grid
        let cloud2 = cloud_from_points(vec![((0, 0), [0.0, 0.0, 1.0])], 8, 8);
        let roi2 = Box2D::new(20.0, 20.0, 30.0, 30.0).unwrap();
        assert!(matches!(
            central_pixel_prior(&cloud2, &roi2),
            Err(Error::EmptyRoi)
        ));
    }

    #[test]
    fn orientation_bins_layout() {
        let bins = OrientationBins::new(2).unwrap();
        assert_eq!(bins.centers(), &[0.0, PI]);
        let bins4 = OrientationBins::new(4).unwrap();
        let expect = [-PI / 2.0, 0.0, PI / 2.0, PI];
        for (c, e) in bins4.centers().iter().zip(expect) {
            assert!((c - e).abs() < 1e-12);
        }
        assert!(OrientationBins::new(1).is_err());
    }

    #[test]
    fn encode_orientation_nearest_center() {
        let bins = OrientationBins::new(2).unwrap();
        assert_eq!(encode_orientation(0.0, &bins), (0, 0.0));
        let (bin, r) = encode_orientation(0.3, &bins);
        assert_eq!(bin, 0);
        assert!((r - 0.3).abs() < 1e-12);
        // past the halfway point the pi bin takes over
        let (bin, r) = encode_orientation(2.0, &bins);
        assert_eq!(bin, 1);
        assert!((r - (2.0 - PI)).abs() < 1e-12);
    }

    #[test]
    fn decode_orientation_wraps() {
        let bins = OrientationBins::new(2).unwrap();
        assert_eq!(decode_orientation(0, 0.0, &bins).unwrap(), 0.0);
        let th = decode_orientation(1, 0.1, &bins).unwrap();
        assert!((th - (-PI + 0.1)).abs() < 1e-12);
        assert!(decode_orientation(2, 0.0, &bins).is_err());
    }

    #[test]
    fn orientation_roundtrip_many_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for b in [2usize, 4, 8] {
            let bins = OrientationBins::new(b).unwrap();
            let half = bins.half_width();
            for _ in 0..10_000 {
                let theta: f64 = rng.random_range(-40.0..40.0);
                let (bin, r) = encode_orientation(theta, &bins);
                assert!(r.abs() <= half + 1e-12, "residual {r} with {b} bins");
                let back = decode_orientation(bin, r, &bins).unwrap();
                assert!(
                    wrap_angle(back - theta).abs() <= 1e-9,
                    "theta {theta} bins {b}"
                );
            }
        }
    }

    #[test]
    fn encode_targets_deltas() {
        let priors = default_priors();
        let bins = OrientationBins::default();
        let prior = CentralPrior {
            p_m: [0.5, 1.0, 19.0],
        };
        let gt = Box3D::new([1.0, 1.0, 20.0], [1.5, 1.8, 4.0], 0.0).unwrap();
        let t = encode_targets(&gt, &prior, 0, &priors, &bins).unwrap();
        assert_eq!(t.delta_p, [0.5, 0.0, 1.0]);
        assert_eq!(t.delta_d, [0.0, 0.0, 0.0]);
        assert_eq!(t.bin, 0);
        assert_eq!(t.bin_onehot, vec![1.0, 0.0]);
        assert_eq!(t.theta_reg, 0.0);

        let zero = encode_targets(
            &Box3D::new(prior.p_m, [1.5, 1.8, 4.0], 0.0).unwrap(),
            &prior,
            0,
            &priors,
            &bins,
        )
        .unwrap();
        assert_eq!(zero.delta_p, [0.0, 0.0, 0.0]);

        assert!(matches!(
            encode_targets(&gt, &prior, 9, &priors, &bins),
            Err(Error::UnknownClass(9))
        ));
    }

    #[test]
    fn delta_p_translation_equivariant() {
        let priors = default_priors();
        let bins = OrientationBins::default();
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for _ in 0..200 {
            let p_m = [
                rng.random_range(-5.0..5.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(1.0..30.0),
            ];
            let gt = Box3D::new(
                [
                    p_m[0] + rng.random_range(-2.0..2.0),
                    p_m[1] + rng.random_range(-2.0..2.0),
                    p_m[2] + rng.random_range(-2.0..2.0),
                ],
                [1.4, 1.7, 3.9],
                rng.random_range(-PI..PI),
            )
            .unwrap();
            let shift = [
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            ];
            let a = encode_targets(&gt, &CentralPrior { p_m }, 0, &priors, &bins).unwrap();
            let gt2 = Box3D::new(
                [
                    gt.center[0] + shift[0],
                    gt.center[1] + shift[1],
                    gt.center[2] + shift[2],
                ],
                gt.dims,
                gt.yaw,
            )
            .unwrap();
            let p_m2 = [p_m[0] + shift[0], p_m[1] + shift[1], p_m[2] + shift[2]];
            let b = encode_targets(&gt2, &CentralPrior { p_m: p_m2 }, 0, &priors, &bins).unwrap();
            for i in 0..3 {
                assert!((a.delta_p[i] - b.delta_p[i]).abs() < 1e-9);
            }
        }
    }

    fn outputs_from_target(t: &TargetVector, bins: &OrientationBins) -> PredictionOutputs {
        let mut logits = vec![0.0; bins.count()];
        logits[t.bin] = 10.0;
        let mut theta = vec![0.0; bins.count()];
        theta[t.bin] = t.theta_reg;
        PredictionOutputs {
            delta_p: t.delta_p,
            delta_d: t.delta_d,
            bin_logits: logits,
            theta_reg: theta,
        }
    }

    #[test]
    fn decode_identity_and_clamp() {
        let priors = default_priors();
        let bins = OrientationBins::default();
        let prior = CentralPrior {
            p_m: [2.0, 0.5, 12.0],
        };
        // identity decode with zero deltas
        let zero = PredictionOutputs {
            delta_p: [0.0; 3],
            delta_d: [0.0; 3],
            bin_logits: vec![5.0, 0.0],
            theta_reg: vec![0.0, 0.0],
        };
        let b = decode_prediction(&zero, &prior, 0, &priors, &bins).unwrap();
        assert_eq!(b.center, prior.p_m);
        assert_eq!(b.dims, [1.5, 1.8, 4.0]);
        assert_eq!(b.yaw, 0.0);

        // clamp rule
        let collapse = PredictionOutputs {
            delta_p: [0.0; 3],
            delta_d: [-1.5 + 0.01, -1.8 + 0.01, -4.0 + 0.01],
            bin_logits: vec![5.0, 0.0],
            theta_reg: vec![0.0, 0.0],
        };
        let c = decode_prediction(&collapse, &prior, 0, &priors, &bins).unwrap();
        assert_eq!(c.dims, [MIN_DECODED_DIM, MIN_DECODED_DIM, MIN_DECODED_DIM]);
    }

    #[test]
    fn decode_encode_roundtrip_random_boxes() {
        let priors = default_priors();
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for b in [2usize, 4] {
            let bins = OrientationBins::new(b).unwrap();
            for _ in 0..1000 {
                let prior = CentralPrior {
                    p_m: [
                        rng.random_range(-10.0..10.0),
                        rng.random_range(-3.0..3.0),
                        rng.random_range(1.0..40.0),
                    ],
                };
                let class_id = rng.random_range(0..2usize);
                let base = priors.get(class_id).unwrap();
                let gt = Box3D::new(
                    [
                        prior.p_m[0] + rng.random_range(-3.0..3.0),
                        prior.p_m[1] + rng.random_range(-2.0..2.0),
                        prior.p_m[2] + rng.random_range(-3.0..3.0),
                    ],
                    [
                        (base[0] + rng.random_range(-0.5..0.5)).max(0.2),
                        (base[1] + rng.random_range(-0.3..0.3)).max(0.2),
                        (base[2] + rng.random_range(-0.8..0.8)).max(0.2),
                    ],
                    rng.random_range(-PI..PI),
                )
                .unwrap();
                let t = encode_targets(&gt, &prior, class_id, &priors, &bins).unwrap();
                let out = outputs_from_target(&t, &bins);
                let back = decode_prediction(&out, &prior, class_id, &priors, &bins).unwrap();
                for i in 0..3 {
                    assert!((back.center[i] - gt.center[i]).abs() <= 1e-9);
                    assert!((back.dims[i] - gt.dims[i]).abs() <= 1e-9);
                }
                assert!(wrap_angle(back.yaw - gt.yaw).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn class_one_hot_basis() {
        assert_eq!(class_one_hot(0, 3).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(class_one_hot(2, 3).unwrap(), vec![0.0, 0.0, 1.0]);
        for k in 0..3 {
            let v = class_one_hot(k, 3).unwrap();
            assert_eq!(v.iter().sum::<f64>(), 1.0);
        }
        assert!(class_one_hot(3, 3).is_err());
    }

    #[test]
    fn priors_table_roundtrip() {
        let p = default_priors();
        let q = ClassPriors::from_table(&p.to_table()).unwrap();
        assert_eq!(p, q);
        assert!(ClassPriors::from_table("0 1.0 2.0").is_err());
        assert!(ClassPriors::from_table("0 -1.0 2.0 3.0").is_err());
        assert!(ClassPriors::from_table("x 1.0 2.0 3.0").is_err());
    }

    #[test]
    fn priors_from_labels_means() {
        let p = ClassPriors::from_labels(vec![
            (0, [1.0, 2.0, 3.0]),
            (0, [3.0, 2.0, 5.0]),
            (1, [1.0, 1.0, 1.0]),
        ]);
        assert_eq!(p.get(0).unwrap(), [2.0, 2.0, 4.0]);
        assert_eq!(p.get(1).unwrap(), [1.0, 1.0, 1.0]);
    }
}

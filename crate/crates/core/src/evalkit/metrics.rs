//! Detection-to-ground-truth matching, precision/recall curves, interpolated
//! average precision, average orientation similarity, and IoU sweeps.
//!
//! Matching is greedy by descending score; each detection takes the
//! highest-IoU unmatched ground truth at or above the threshold, ties broken
//! by lower ground-truth index. Ground truths outside the difficulty filter
//! are "ignored": detections matching them count neither as TP nor FP.

use crate::boxes::{iou_3d, iou_bev, orientation_similarity, Box2D};
use crate::error::{Error, Result};

use super::label::{assign_difficulty, Difficulty, LabelRecord};

/// Outcome of single-frame matching.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// (detection index, ground-truth index, IoU), in match order.
    pub matches: Vec<(usize, usize, f64)>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

/// Greedy matching of scored detections against ground truths.
pub fn match_detections<D, G>(
    dets: &[D],
    gts: &[G],
    score: impl Fn(&D) -> f64,
    iou: impl Fn(&D, &G) -> f64,
    threshold: f64,
) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        score(&dets[b])
            .partial_cmp(&score(&dets[a]))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut gt_taken = vec![false; gts.len()];
    let mut matches = Vec::new();
    let mut false_positives = Vec::new();
    for di in order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_taken[gi] {
                continue;
            }
            let v = iou(&dets[di], gt);
            if v >= threshold {
                let better = match best {
                    None => true,
                    Some((_, bv)) => v > bv,
                };
                if better {
                    best = Some((gi, v));
                }
            }
        }
        match best {
            Some((gi, v)) => {
                gt_taken[gi] = true;
                matches.push((di, gi, v));
            }
            None => false_positives.push(di),
        }
    }
    let false_negatives = (0..gts.len()).filter(|&g| !gt_taken[g]).collect();
    MatchResult {
        matches,
        false_positives,
        false_negatives,
    }
}

/// Interpolation rule for average precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApMode {
    /// 11 recall points {0, 0.1, ..., 1.0}.
    R11,
    /// 40 recall points {1/40, ..., 1.0}; the post-2019 KITTI convention.
    #[default]
    R40,
}

impl ApMode {
    pub fn recall_points(self) -> Vec<f64> {
        match self {
            ApMode::R11 => (0..=10).map(|i| i as f64 / 10.0).collect(),
            ApMode::R40 => (1..=40).map(|i| i as f64 / 40.0).collect(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "r11" => Ok(ApMode::R11),
            "r40" => Ok(ApMode::R40),
            other => Err(Error::Config(format!("unknown AP mode {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ApMode::R11 => "r11",
            ApMode::R40 => "r40",
        }
    }
}

/// One precision/recall sample at a score threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PRPoint {
    pub score: f64,
    pub recall: f64,
    pub precision: f64,
    /// Orientation-weighted precision: similarity sum over (TP + FP).
    pub similarity: f64,
}

/// Precision/recall curve ordered by descending score threshold, so recall is
/// non-decreasing along the curve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PRCurve {
    pub points: Vec<PRPoint>,
    pub num_gt: usize,
}

/// Mean of the max-precision-to-the-right envelope over the sample recalls,
/// in percent.
pub fn average_precision(curve: &PRCurve, mode: ApMode) -> f64 {
    interpolated_mean(curve, mode, |p| p.precision)
}

/// The AOS value of a curve: like AP with each TP contributing its
/// orientation similarity instead of 1.
pub fn average_orientation_similarity(curve: &PRCurve, mode: ApMode) -> f64 {
    interpolated_mean(curve, mode, |p| p.similarity)
}

fn interpolated_mean(curve: &PRCurve, mode: ApMode, value: impl Fn(&PRPoint) -> f64) -> f64 {
    let recalls = mode.recall_points();
    let mut acc = 0.0;
    for r in &recalls {
        let mut best = 0.0f64;
        for p in &curve.points {
            if p.recall >= *r - 1e-12 {
                best = best.max(value(p));
            }
        }
        acc += best;
    }
    100.0 * acc / recalls.len() as f64
}

/// How a pooled detection resolved during the threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
enum DetOutcome {
    /// True positive with the orientation similarity of its match.
    TruePositive { similarity: f64 },
    /// Matched an ignored ground truth or a DontCare region.
    Ignored,
    FalsePositive,
}

/// A frame's ground truths split by the difficulty filter, plus DontCare
/// regions for FP suppression.
struct FrameGts {
    valid: Vec<LabelRecord>,
    ignored: Vec<LabelRecord>,
    dontcare: Vec<Box2D>,
}

/// Geometry used for matching during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchGeometry {
    Bev,
    ThreeD,
    Box2d,
}

impl MatchGeometry {
    fn iou(self, det: &LabelRecord, gt: &LabelRecord) -> f64 {
        match self {
            MatchGeometry::Bev => match (det.box3d(), gt.box3d()) {
                (Ok(a), Ok(b)) => iou_bev(&a, &b),
                _ => 0.0,
            },
            MatchGeometry::ThreeD => match (det.box3d(), gt.box3d()) {
                (Ok(a), Ok(b)) => iou_3d(&a, &b),
                _ => 0.0,
            },
            MatchGeometry::Box2d => match (det.box2d(), gt.box2d()) {
                (Ok(a), Ok(b)) => a.iou(&b),
                _ => 0.0,
            },
        }
    }
}

fn split_frame_gts(gts: &[LabelRecord], class: &str, difficulty: Difficulty) -> FrameGts {
    let mut valid = Vec::new();
    let mut ignored = Vec::new();
    let mut dontcare = Vec::new();
    for gt in gts {
        if gt.is_dontcare() {
            if let Ok(b) = gt.box2d() {
                dontcare.push(b);
            }
            continue;
        }
        if gt.type_name != class {
            continue;
        }
        if assign_difficulty(gt).contains(&difficulty) {
            valid.push(gt.clone());
        } else {
            ignored.push(gt.clone());
        }
    }
    FrameGts {
        valid,
        ignored,
        dontcare,
    }
}

/// Fraction of the detection's own 2D area covered by a region.
fn dontcare_overlap(det: &LabelRecord, region: &Box2D) -> f64 {
    match det.box2d() {
        Ok(b) => {
            let inter = b.intersection_area(region);
            if b.area() <= 0.0 {
                0.0
            } else {
                inter / b.area()
            }
        }
        Err(_) => 0.0,
    }
}

/// Sweep state for one frame: which gts are already taken.
struct FrameState {
    valid_taken: Vec<bool>,
    ignored_taken: Vec<bool>,
}

/// Resolve one detection against its frame, mutating the frame state.
fn resolve_detection(
    det: &LabelRecord,
    gts: &FrameGts,
    state: &mut FrameState,
    geometry: MatchGeometry,
    threshold: f64,
) -> DetOutcome {
    let mut best: Option<(usize, f64)> = None;
    for (gi, gt) in gts.valid.iter().enumerate() {
        if state.valid_taken[gi] {
            continue;
        }
        let v = geometry.iou(det, gt);
        if v >= threshold {
            let better = match best {
                None => true,
                Some((_, bv)) => v > bv,
            };
            if better {
                best = Some((gi, v));
            }
        }
    }
    if let Some((gi, _)) = best {
        state.valid_taken[gi] = true;
        let delta = det.rotation_y - gts.valid[gi].rotation_y;
        return DetOutcome::TruePositive {
            similarity: orientation_similarity(delta),
        };
    }
    // ignored ground truths absorb detections without penalty
    let mut best_ign: Option<(usize, f64)> = None;
    for (gi, gt) in gts.ignored.iter().enumerate() {
        if state.ignored_taken[gi] {
            continue;
        }
        let v = geometry.iou(det, gt);
        if v >= threshold {
            let better = match best_ign {
                None => true,
                Some((_, bv)) => v > bv,
            };
            if better {
                best_ign = Some((gi, v));
            }
        }
    }
    if let Some((gi, _)) = best_ign {
        state.ignored_taken[gi] = true;
        return DetOutcome::Ignored;
    }
    if gts
        .dontcare
        .iter()
        .any(|region| dontcare_overlap(det, region) > 0.5)
    {
        return DetOutcome::Ignored;
    }
    DetOutcome::FalsePositive
}

/// Build the pooled PR curve for one class/difficulty over many frames.
///
/// Detections are processed in descending score order across all frames; one
/// PR point is recorded after each distinct score value. The greedy match of
/// a detection depends only on higher-scored detections, so the point at
/// threshold t equals a fresh evaluation over detections with score >= t.
pub fn pr_curve(
    gt_frames: &[Vec<LabelRecord>],
    det_frames: &[Vec<LabelRecord>],
    class: &str,
    difficulty: Difficulty,
    geometry: MatchGeometry,
    threshold: f64,
) -> Result<PRCurve> {
    if gt_frames.len() != det_frames.len() {
        return Err(Error::Config(format!(
            "{} gt frames vs {} det frames",
            gt_frames.len(),
            det_frames.len()
        )));
    }
    let frames: Vec<FrameGts> = gt_frames
        .iter()
        .map(|gts| split_frame_gts(gts, class, difficulty))
        .collect();
    let num_gt: usize = frames.iter().map(|f| f.valid.len()).sum();

    struct Pooled<'a> {
        frame: usize,
        det: &'a LabelRecord,
        score: f64,
    }
    let mut pooled = Vec::new();
    for (fi, dets) in det_frames.iter().enumerate() {
        for det in dets {
            if det.type_name != class {
                continue;
            }
            let score = det.score.ok_or_else(|| {
                Error::Config("detection record without a score field".into())
            })?;
            pooled.push(Pooled {
                frame: fi,
                det,
                score,
            });
        }
    }
    pooled.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.frame.cmp(&b.frame))
    });

    let mut states: Vec<FrameState> = frames
        .iter()
        .map(|f| FrameState {
            valid_taken: vec![false; f.valid.len()],
            ignored_taken: vec![false; f.ignored.len()],
        })
        .collect();

    let mut curve = PRCurve {
        points: Vec::new(),
        num_gt,
    };
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut sim_sum = 0.0f64;
    let mut i = 0usize;
    while i < pooled.len() {
        let score = pooled[i].score;
        // consume the whole tie group before recording a point
        while i < pooled.len() && pooled[i].score == score {
            let p = &pooled[i];
            match resolve_detection(
                p.det,
                &frames[p.frame],
                &mut states[p.frame],
                geometry,
                threshold,
            ) {
                DetOutcome::TruePositive { similarity } => {
                    tp += 1;
                    sim_sum += similarity;
                }
                DetOutcome::Ignored => {}
                DetOutcome::FalsePositive => fp += 1,
            }
            i += 1;
        }
        if tp + fp > 0 {
            curve.points.push(PRPoint {
                score,
                recall: if num_gt == 0 {
                    0.0
                } else {
                    tp as f64 / num_gt as f64
                },
                precision: tp as f64 / (tp + fp) as f64,
                similarity: sim_sum / (tp + fp) as f64,
            });
        }
    }
    Ok(curve)
}

/// Counts at the full-recall end of a curve's sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
}

/// TP/FP/FN with every detection admitted (threshold at the lowest score).
pub fn final_counts(curve: &PRCurve) -> MatchCounts {
    match curve.points.last() {
        None => MatchCounts {
            tp: 0,
            fp: 0,
            fn_count: curve.num_gt,
        },
        Some(p) => {
            let tp = (p.recall * curve.num_gt as f64).round() as usize;
            let total = if p.precision > 0.0 {
                (tp as f64 / p.precision).round() as usize
            } else {
                0
            };
            MatchCounts {
                tp,
                fp: total.saturating_sub(tp),
                fn_count: curve.num_gt.saturating_sub(tp),
            }
        }
    }
}

/// AP over a list of IoU thresholds; non-increasing in the threshold.
pub fn iou_sweep(
    gt_frames: &[Vec<LabelRecord>],
    det_frames: &[Vec<LabelRecord>],
    class: &str,
    difficulty: Difficulty,
    geometry: MatchGeometry,
    thresholds: &[f64],
    mode: ApMode,
) -> Result<Vec<(f64, f64)>> {
    if thresholds.is_empty() {
        return Err(Error::Config("empty IoU threshold list".into()));
    }
    let mut out = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let curve = pr_curve(gt_frames, det_frames, class, difficulty, geometry, t)?;
        out.push((t, average_precision(&curve, mode)));
    }
    Ok(out)
}

/// Evaluation settings for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEvalSpec {
    pub name: String,
    /// IoU threshold for BEV and 3D matching (0.7 cars, 0.5 pedestrians in
    /// the KITTI devkit).
    pub iou_3d: f64,
    /// 2D IoU threshold used by AOS matching.
    pub iou_2d: f64,
}

/// Metrics for one class at one difficulty.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalEntry {
    pub class: String,
    pub difficulty: Difficulty,
    pub ap_bev: f64,
    pub ap_3d: f64,
    pub aos: f64,
    pub counts_3d: MatchCounts,
}

/// The full report: class x difficulty metric rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub entries: Vec<EvalEntry>,
    pub mode: ApMode,
}

impl EvalReport {
    pub fn get(&self, class: &str, difficulty: Difficulty) -> Option<&EvalEntry> {
        self.entries
            .iter()
            .find(|e| e.class == class && e.difficulty == difficulty)
    }

    /// Flat machine-readable key=value lines.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("mode={}\n", self.mode.name()));
        for e in &self.entries {
            let prefix = format!("{}.{}", e.class.to_lowercase(), e.difficulty.name());
            out.push_str(&format!("{prefix}.ap_bev={:.6}\n", e.ap_bev));
            out.push_str(&format!("{prefix}.ap_3d={:.6}\n", e.ap_3d));
            out.push_str(&format!("{prefix}.aos={:.6}\n", e.aos));
            out.push_str(&format!("{prefix}.tp={}\n", e.counts_3d.tp));
            out.push_str(&format!("{prefix}.fp={}\n", e.counts_3d.fp));
            out.push_str(&format!("{prefix}.fn={}\n", e.counts_3d.fn_count));
        }
        out
    }

    /// Human-readable fixed-width table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:<10} {:>8} {:>8} {:>8} {:>6} {:>6} {:>6}\n",
            "class", "difficulty", "AP_BEV", "AP_3D", "AOS", "TP", "FP", "FN"
        ));
        for e in &self.entries {
            out.push_str(&format!(
                "{:<12} {:<10} {:>8.2} {:>8.2} {:>8.2} {:>6} {:>6} {:>6}\n",
                e.class,
                e.difficulty.name(),
                e.ap_bev,
                e.ap_3d,
                e.aos,
                e.counts_3d.tp,
                e.counts_3d.fp,
                e.counts_3d.fn_count
            ));
        }
        out
    }
}

/// Run the full evaluation over aligned gt/detection frames.
pub fn evaluate(
    gt_frames: &[Vec<LabelRecord>],
    det_frames: &[Vec<LabelRecord>],
    classes: &[ClassEvalSpec],
    mode: ApMode,
) -> Result<EvalReport> {
    let mut report = EvalReport {
        entries: Vec::new(),
        mode,
    };
    for spec in classes {
        for difficulty in Difficulty::ALL {
            let bev = pr_curve(
                gt_frames,
                det_frames,
                &spec.name,
                difficulty,
                MatchGeometry::Bev,
                spec.iou_3d,
            )?;
            let three_d = pr_curve(
                gt_frames,
                det_frames,
                &spec.name,
                difficulty,
                MatchGeometry::ThreeD,
                spec.iou_3d,
            )?;
            let aos_curve = pr_curve(
                gt_frames,
                det_frames,
                &spec.name,
                difficulty,
                MatchGeometry::Box2d,
                spec.iou_2d,
            )?;
            report.entries.push(EvalEntry {
                class: spec.name.clone(),
                difficulty,
                ap_bev: average_precision(&bev, mode),
                ap_3d: average_precision(&three_d, mode),
                aos: average_orientation_similarity(&aos_curve, mode),
                counts_3d: final_counts(&three_d),
            });
        }
    }
    Ok(report)
}

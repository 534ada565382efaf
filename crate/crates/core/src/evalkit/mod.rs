//! KITTI-format label I/O, difficulty bucketing, detection matching, and the
//! AP_BEV / AP_3D / AOS evaluation suite with IoU-threshold sweeps.

mod label;
mod metrics;

pub use label::{
    assign_difficulty, parse_kitti_label, read_label_file, serialize_kitti_label,
    write_label_file, Difficulty, LabelRecord,
};
pub use metrics::{
    average_orientation_similarity, average_precision, evaluate, final_counts, iou_sweep,
    match_detections, pr_curve, ApMode, ClassEvalSpec, EvalEntry, EvalReport, MatchCounts,
    MatchGeometry, MatchResult, PRCurve, PRPoint,
};

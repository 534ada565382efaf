//! KITTI-format label records: parsing, fixed-precision serialization, and
//! difficulty bucketing.

use std::path::Path;

use crate::boxes::{Box2D, Box3D};
use crate::error::{Error, Result};

/// One line of a KITTI label file: 15 fields for ground truth, 16 with the
/// trailing score for detections.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    /// Class name; unknown names are preserved verbatim.
    pub type_name: String,
    /// Fraction of the object outside image bounds, [0, 1].
    pub truncated: f64,
    /// Occlusion state 0..=3.
    pub occluded: u8,
    /// Observation angle, radians.
    pub alpha: f64,
    /// 2D box (left, top, right, bottom) in pixels.
    pub bbox: [f64; 4],
    /// (h, w, l) in meters.
    pub dims: [f64; 3],
    /// Bottom-center location (x, y, z) in meters, camera frame.
    pub location: [f64; 3],
    /// Yaw about the y axis, radians.
    pub rotation_y: f64,
    /// Detection confidence; absent on ground-truth records.
    pub score: Option<f64>,
}

impl LabelRecord {
    pub fn bbox_height(&self) -> f64 {
        self.bbox[3] - self.bbox[1]
    }

    pub fn box2d(&self) -> Result<Box2D> {
        Box2D::new(self.bbox[0], self.bbox[1], self.bbox[2], self.bbox[3])
    }

    pub fn box3d(&self) -> Result<Box3D> {
        Box3D::new(self.location, self.dims, self.rotation_y)
    }

    pub fn is_dontcare(&self) -> bool {
        self.type_name == "DontCare"
    }
}

/// Parse one whitespace-separated label line. `line_no` is used in errors.
pub fn parse_kitti_label(line: &str, line_no: usize) -> Result<LabelRecord> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 15 && fields.len() != 16 {
        return Err(Error::format(
            line_no,
            format!("expected 15 or 16 fields, found {}", fields.len()),
        ));
    }
    let num = |i: usize| -> Result<f64> {
        fields[i]
            .parse::<f64>()
            .map_err(|_| Error::format(line_no, format!("field {}: bad number {:?}", i + 1, fields[i])))
    };
    let occluded_f = num(2)?;
    let occluded = occluded_f as i64;
    if !(0..=3).contains(&occluded) || occluded_f.fract() != 0.0 {
        return Err(Error::format(
            line_no,
            format!("occluded must be an integer in 0..=3, found {:?}", fields[2]),
        ));
    }
    Ok(LabelRecord {
        type_name: fields[0].to_string(),
        truncated: num(1)?,
        occluded: occluded as u8,
        alpha: num(3)?,
        bbox: [num(4)?, num(5)?, num(6)?, num(7)?],
        dims: [num(8)?, num(9)?, num(10)?],
        location: [num(11)?, num(12)?, num(13)?],
        rotation_y: num(14)?,
        score: if fields.len() == 16 {
            Some(num(15)?)
        } else {
            None
        },
    })
}

/// Serialize at the fixed "%.2f" formatting with occlusion as an integer.
pub fn serialize_kitti_label(rec: &LabelRecord) -> String {
    let mut s = format!(
        "{} {:.2} {} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2}",
        rec.type_name,
        rec.truncated,
        rec.occluded,
        rec.alpha,
        rec.bbox[0],
        rec.bbox[1],
        rec.bbox[2],
        rec.bbox[3],
        rec.dims[0],
        rec.dims[1],
        rec.dims[2],
        rec.location[0],
        rec.location[1],
        rec.location[2],
        rec.rotation_y
    );
    if let Some(score) = rec.score {
        s.push_str(&format!(" {score:.2}"));
    }
    s
}

/// Read a whole label file, one record per non-empty line.
pub fn read_label_file(path: &Path) -> Result<Vec<LabelRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_kitti_label(line, i + 1)?);
    }
    Ok(records)
}

/// Write records as a KITTI label file.
pub fn write_label_file(path: &Path, records: &[LabelRecord]) -> Result<()> {
    let mut text = String::new();
    for rec in records {
        text.push_str(&serialize_kitti_label(rec));
        text.push('\n');
    }
    crate::atomic_write(path, text.as_bytes())
}

/// KITTI evaluation difficulty buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
        }
    }

    fn min_bbox_height(self) -> f64 {
        match self {
            Difficulty::Easy => 40.0,
            Difficulty::Moderate | Difficulty::Hard => 25.0,
        }
    }

    fn max_occlusion(self) -> u8 {
        match self {
            Difficulty::Easy => 0,
            Difficulty::Moderate => 1,
            Difficulty::Hard => 2,
        }
    }

    fn max_truncation(self) -> f64 {
        match self {
            Difficulty::Easy => 0.15,
            Difficulty::Moderate => 0.30,
            Difficulty::Hard => 0.50,
        }
    }
}

/// Every difficulty whose thresholds the record satisfies. Membership is
/// cumulative in practice: easy implies moderate implies hard.
pub fn assign_difficulty(rec: &LabelRecord) -> Vec<Difficulty> {
    Difficulty::ALL
        .into_iter()
        .filter(|d| {
            rec.bbox_height() >= d.min_bbox_height()
                && rec.occluded <= d.max_occlusion()
                && rec.truncated <= d.max_truncation()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str =
        "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59";

    #[test]
    fn parse_sample_line() {
        let rec = parse_kitti_label(SAMPLE, 1).unwrap();
        assert_eq!(rec.type_name, "Car");
        assert_eq!(rec.truncated, 0.0);
        assert_eq!(rec.occluded, 0);
        assert_eq!(rec.alpha, -1.58);
        assert_eq!(rec.bbox, [587.01, 173.33, 614.12, 200.12]);
        assert_eq!(rec.dims, [1.65, 1.67, 3.64]);
        assert_eq!(rec.location, [-0.65, 1.71, 46.70]);
        assert_eq!(rec.rotation_y, -1.59);
        assert_eq!(rec.score, None);
    }

    #[test]
    fn parse_detection_line_with_score() {
        let line = format!("{SAMPLE} 0.87");
        let rec = parse_kitti_label(&line, 1).unwrap();
        assert_eq!(rec.score, Some(0.87));
    }

    #[test]
    fn serialize_parse_roundtrip_fixpoint() {
        let rec = parse_kitti_label(SAMPLE, 1).unwrap();
        let line = serialize_kitti_label(&rec);
        assert_eq!(line, SAMPLE);
        let rec2 = parse_kitti_label(&line, 1).unwrap();
        assert_eq!(rec, rec2);

        // values with higher precision stabilize after one rounding pass
        let mut noisy = rec.clone();
        noisy.location[2] = 46.70321;
        noisy.score = Some(0.87654);
        let first = serialize_kitti_label(&noisy);
        let reparsed = parse_kitti_label(&first, 1).unwrap();
        assert_eq!(serialize_kitti_label(&reparsed), first);
    }

    #[test]
    fn parse_rejects_malformed_lines() {
        let short = "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71";
        assert!(matches!(
            parse_kitti_label(short, 3),
            Err(Error::Format { line: 3, .. })
        ));
        let garbled = SAMPLE.replace("46.70", "forty");
        assert!(parse_kitti_label(&garbled, 1).is_err());
        let bad_occ = SAMPLE.replace(" 0 ", " 7 ");
        assert!(parse_kitti_label(&bad_occ, 1).is_err());
    }

    #[test]
    fn unknown_class_preserved() {
        let line = SAMPLE.replace("Car", "Unicycle");
        let rec = parse_kitti_label(&line, 1).unwrap();
        assert_eq!(rec.type_name, "Unicycle");
        assert!(serialize_kitti_label(&rec).starts_with("Unicycle "));
    }

    fn record_with(height: f64, occluded: u8, truncated: f64) -> LabelRecord {
        LabelRecord {
            type_name: "Car".into(),
            truncated,
            occluded,
            alpha: 0.0,
            bbox: [100.0, 100.0, 140.0, 100.0 + height],
            dims: [1.5, 1.8, 4.0],
            location: [0.0, 1.6, 20.0],
            rotation_y: 0.0,
            score: None,
        }
    }

    #[test]
    fn difficulty_thresholds() {
        use Difficulty::*;
        assert_eq!(
            assign_difficulty(&record_with(50.0, 0, 0.0)),
            vec![Easy, Moderate, Hard]
        );
        assert_eq!(
            assign_difficulty(&record_with(30.0, 1, 0.2)),
            vec![Moderate, Hard]
        );
        assert_eq!(assign_difficulty(&record_with(20.0, 0, 0.0)), vec![]);
        assert_eq!(assign_difficulty(&record_with(50.0, 2, 0.4)), vec![Hard]);
        assert_eq!(
            assign_difficulty(&record_with(39.9, 0, 0.1)),
            vec![Moderate, Hard]
        );
    }

    #[test]
    fn label_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("000000.txt");
        let rec = parse_kitti_label(SAMPLE, 1).unwrap();
        write_label_file(&path, &[rec.clone(), rec.clone()]).unwrap();
        let back = read_label_file(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], rec);
    }
}

//! 2D/3D bounding-box types, rotated BEV and 3D intersection-over-union,
//! and orientation similarity.
//!
//! `Box3D` stores the KITTI label location semantics: `center` is the
//! bottom-center of the box, so the vertical extent is `[y - h, y]` with y
//! pointing down. Geometric routines convert internally.

use crate::error::{Error, Result};
use crate::wrap_angle;

/// Axis-aligned 2D box in pixels, top-left `(u1, v1)` to bottom-right `(u2, v2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2D {
    pub u1: f64,
    pub v1: f64,
    pub u2: f64,
    pub v2: f64,
}

impl Box2D {
    pub fn new(u1: f64, v1: f64, u2: f64, v2: f64) -> Result<Self> {
        if !(u2 > u1 && v2 > v1) {
            return Err(Error::Config(format!(
                "degenerate 2D box ({u1},{v1})-({u2},{v2})"
            )));
        }
        Ok(Self { u1, v1, u2, v2 })
    }

    pub fn width(&self) -> f64 {
        self.u2 - self.u1
    }

    pub fn height(&self) -> f64 {
        self.v2 - self.v1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Axis-aligned intersection area with another 2D box.
    pub fn intersection_area(&self, other: &Box2D) -> f64 {
        let w = (self.u2.min(other.u2) - self.u1.max(other.u1)).max(0.0);
        let h = (self.v2.min(other.v2) - self.v1.max(other.v1)).max(0.0);
        w * h
    }

    /// Plain 2D IoU, used by AOS matching and DontCare suppression.
    pub fn iou(&self, other: &Box2D) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Oriented 3D box. `center` is the bottom-center (KITTI location semantics),
/// `dims` is (h, w, l) in meters, `yaw` the rotation about the y axis in
/// `(-pi, pi]`. At yaw 0 the width spans x and the length spans z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub center: [f64; 3],
    /// (height, width, length) in meters.
    pub dims: [f64; 3],
    pub yaw: f64,
}

impl Box3D {
    pub fn new(center: [f64; 3], dims: [f64; 3], yaw: f64) -> Result<Self> {
        if !(dims[0] > 0.0 && dims[1] > 0.0 && dims[2] > 0.0) {
            return Err(Error::Config(format!("non-positive box dims {dims:?}")));
        }
        Ok(Self {
            center,
            dims,
            yaw: wrap_angle(yaw),
        })
    }

    pub fn h(&self) -> f64 {
        self.dims[0]
    }

    pub fn w(&self) -> f64 {
        self.dims[1]
    }

    pub fn l(&self) -> f64 {
        self.dims[2]
    }

    pub fn volume(&self) -> f64 {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Vertical extent `[y_min, y_max]`; the box hangs above the bottom-anchor
    /// in the y-down camera frame.
    pub fn y_interval(&self) -> (f64, f64) {
        (self.center[1] - self.dims[0], self.center[1])
    }
}

/// A scored 2D detection used as the region of interest for lifting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection2D {
    pub class_id: usize,
    pub score: f64,
    pub box2d: Box2D,
}

impl Detection2D {
    pub fn new(class_id: usize, score: f64, box2d: Box2D) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Config(format!("detection score {score} not in [0,1]")));
        }
        Ok(Self {
            class_id,
            score,
            box2d,
        })
    }
}

/// The product of the lifting pipeline: a 3D box with class and score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftedDetection {
    pub class_id: usize,
    pub score: f64,
    pub box3d: Box3D,
}

/// Ordered counter-clockwise corners of the box footprint in the (x, z) plane.
///
/// Rotation follows the KITTI R_y convention: local (dx, dz) maps to
/// `(c*dx + s*dz, -s*dx + c*dz)` for yaw angle with c = cos, s = sin.
pub fn bev_corners(b: &Box3D) -> [[f64; 2]; 4] {
    let (s, c) = b.yaw.sin_cos();
    let hw = b.w() / 2.0;
    let hl = b.l() / 2.0;
    // counter-clockwise with x right, z up
    let local = [[hw, hl], [-hw, hl], [-hw, -hl], [hw, -hl]];
    let mut out = [[0.0; 2]; 4];
    for (i, [dx, dz]) in local.into_iter().enumerate() {
        out[i] = [
            b.center[0] + c * dx + s * dz,
            b.center[2] - s * dx + c * dz,
        ];
    }
    out
}

/// Signed polygon area by the shoelace formula; positive for CCW order.
fn shoelace(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let [x1, y1] = poly[i];
        let [x2, y2] = poly[(i + 1) % poly.len()];
        acc += x1 * y2 - x2 * y1;
    }
    acc / 2.0
}

/// Clip `subject` against the half-plane left of directed edge a->b.
/// Points exactly on the edge are kept.
fn clip_halfplane(subject: &[[f64; 2]], a: [f64; 2], b: [f64; 2]) -> Vec<[f64; 2]> {
    let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let mut out = Vec::with_capacity(subject.len() + 1);
    for i in 0..subject.len() {
        let s = subject[i];
        let e = subject[(i + 1) % subject.len()];
        let sc = side(s);
        let ec = side(e);
        let s_in = sc >= 0.0;
        let e_in = ec >= 0.0;
        if s_in != e_in {
            let t = sc / (sc - ec);
            out.push([s[0] + (e[0] - s[0]) * t, s[1] + (e[1] - s[1]) * t]);
        }
        if e_in {
            out.push(e);
        }
    }
    out
}

/// Intersection of two convex CCW polygons via Sutherland-Hodgman clipping.
fn convex_intersection(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut poly = subject.to_vec();
    for i in 0..clip.len() {
        if poly.is_empty() {
            break;
        }
        poly = clip_halfplane(&poly, clip[i], clip[(i + 1) % clip.len()]);
    }
    poly
}

/// Intersection area of the two box footprints in the BEV plane.
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    let pa = bev_corners(a);
    let pb = bev_corners(b);
    let inter = convex_intersection(&pa, &pb);
    shoelace(&inter).abs()
}

/// Rotated intersection-over-union of the box footprints in bird's-eye view.
///
/// Degenerate contact (a shared edge or corner) yields zero intersection.
pub fn iou_bev(a: &Box3D, b: &Box3D) -> f64 {
    let inter = bev_intersection_area(a, b);
    let union = a.w() * a.l() + b.w() * b.l() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// 3D intersection-over-union: BEV intersection area times the overlap of the
/// bottom-anchored height intervals, over the volume union.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let (a_lo, a_hi) = a.y_interval();
    let (b_lo, b_hi) = b.y_interval();
    let dy = (a_hi.min(b_hi) - a_lo.max(b_lo)).max(0.0);
    let inter = bev_intersection_area(a, b) * dy;
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Orientation similarity `(1 + cos(delta_yaw)) / 2`, in [0, 1].
pub fn orientation_similarity(delta_yaw: f64) -> f64 {
    (1.0 + delta_yaw.cos()) / 2.0
}

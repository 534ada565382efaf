//! Static SVG rendering of bird's-eye-view boxes with red heading lines.
//!
//! The BEV plane maps x to the right and z upward; the camera sits at the
//! bottom of the plot looking up.

use lift3d_core::boxes::{bev_corners, Box3D};

/// Linear mapping from BEV coordinates to SVG pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotTransform {
    pub scale: f64,
    pub x_min: f64,
    pub z_max: f64,
    pub pad: f64,
}

impl PlotTransform {
    pub fn apply(&self, x: f64, z: f64) -> (f64, f64) {
        (
            self.pad + (x - self.x_min) * self.scale,
            self.pad + (self.z_max - z) * self.scale,
        )
    }
}

/// A box to draw, with a stroke color and optional annotation.
pub struct PlotBox {
    pub box3d: Box3D,
    pub color: String,
    pub label: Option<String>,
}

/// Compute the transform that fits every corner (and the camera origin)
/// into `target_px` with padding.
pub fn fit_transform(boxes: &[&PlotBox], target_px: f64, pad: f64) -> PlotTransform {
    let mut x_min = -1.0f64;
    let mut x_max = 1.0f64;
    let mut z_min = 0.0f64;
    let mut z_max = 5.0f64;
    for pb in boxes {
        for [x, z] in bev_corners(&pb.box3d) {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            z_min = z_min.min(z);
            z_max = z_max.max(z);
        }
    }
    let extent = (x_max - x_min).max(z_max - z_min).max(1.0);
    PlotTransform {
        scale: target_px / extent,
        x_min,
        z_max,
        pad,
    }
}

fn polygon_points(b: &Box3D, t: &PlotTransform) -> String {
    bev_corners(b)
        .iter()
        .map(|&[x, z]| {
            let (px, py) = t.apply(x, z);
            format!("{px},{py}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// The midpoint of the box's forward face in BEV, the far end of the
/// heading tick.
pub fn heading_endpoint(b: &Box3D) -> (f64, f64) {
    let (s, c) = b.yaw.sin_cos();
    (
        b.center[0] + s * b.l() / 2.0,
        b.center[2] + c * b.l() / 2.0,
    )
}

/// Render the boxes as a standalone SVG document.
pub fn render_bev(boxes: &[PlotBox], target_px: f64) -> String {
    let pad = 20.0;
    let refs: Vec<&PlotBox> = boxes.iter().collect();
    let t = fit_transform(&refs, target_px, pad);
    let width = target_px + 2.0 * pad;
    let height = target_px + 2.0 * pad;
    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // camera marker at the origin
    let (cam_x, cam_y) = t.apply(0.0, 0.0);
    svg.push_str(&format!(
        "  <circle cx=\"{cam_x}\" cy=\"{cam_y}\" r=\"4\" fill=\"black\"/>\n"
    ));
    for pb in boxes {
        svg.push_str(&format!(
            "  <polygon points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            polygon_points(&pb.box3d, &t),
            pb.color
        ));
        let (cx, cz) = (pb.box3d.center[0], pb.box3d.center[2]);
        let (hx, hz) = heading_endpoint(&pb.box3d);
        let (x1, y1) = t.apply(cx, cz);
        let (x2, y2) = t.apply(hx, hz);
        svg.push_str(&format!(
            "  <line x1=\"{x1}\" y1=\"{y1}\" x2=\"{x2}\" y2=\"{y2}\" stroke=\"red\" stroke-width=\"1.5\"/>\n"
        ));
        if let Some(label) = &pb.label {
            svg.push_str(&format!(
                "  <text x=\"{x1}\" y=\"{}\" font-size=\"9\" fill=\"{}\">{}</text>\n",
                y1 - 6.0,
                pb.color,
                xml_escape(label)
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_box() -> Box3D {
        Box3D::new([1.0, 1.6, 10.0], [1.5, 1.8, 4.2], 0.6).unwrap()
    }

    #[test]
    fn polygon_matches_transformed_corners() {
        let pb = PlotBox {
            box3d: sample_box(),
            color: "green".into(),
            label: None,
        };
        let svg = render_bev(&[pb], 400.0);
        let refs = [&PlotBox {
            box3d: sample_box(),
            color: "green".into(),
            label: None,
        }];
        let t = fit_transform(&refs, 400.0, 20.0);
        for [x, z] in bev_corners(&sample_box()) {
            let (px, py) = t.apply(x, z);
            assert!(
                svg.contains(&format!("{px},{py}")),
                "corner ({px},{py}) missing from SVG"
            );
        }
    }

    #[test]
    fn heading_line_present_and_red() {
        let pb = PlotBox {
            box3d: sample_box(),
            color: "green".into(),
            label: Some("Car".into()),
        };
        let svg = render_bev(&[pb], 300.0);
        assert!(svg.contains("stroke=\"red\""));
        assert!(svg.contains("<text"));
    }
}

//! Scatter plots over the fixed viewport `[-5, 5]^2`.

use std::fmt::Write as _;
use std::path::Path;

use licfg::tensor::Tensor;

pub const SIZE: f64 = 500.0;
const HALF_WIDTH: f64 = 5.0;
const CROSS: f64 = 6.0;

/// Pixel coordinates of a data point; `y` grows upwards in data space.
pub fn to_pixels(x: f64, y: f64) -> (f64, f64) {
    let scale = SIZE / (2.0 * HALF_WIDTH);
    ((x + HALF_WIDTH) * scale, (HALF_WIDTH - y) * scale)
}

pub fn render_scatter_svg(points: &Tensor, centers: &[[f64; 2]]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(s, r##"<g fill="#1f77b4" fill-opacity="0.5">"##);
    if points.cols() >= 2 {
        for r in points.iter_rows().take(points.rows()) {
            if !(r[0].is_finite() && r[1].is_finite()) {
                continue;
            }
            let (px, py) = to_pixels(r[0], r[1]);
            let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="1.5"/>"#);
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g stroke="#d62728" stroke-width="2">"##);
    for c in centers {
        let (px, py) = to_pixels(c[0], c[1]);
        let _ = writeln!(
            s,
            r#"<path class="center" d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}"/>"#,
            px - CROSS,
            py - CROSS,
            px + CROSS,
            py + CROSS,
            px - CROSS,
            py + CROSS,
            px + CROSS,
            py - CROSS
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

pub fn emit_scatter_svg(points: &Tensor, centers: &[[f64; 2]], path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, render_scatter_svg(points, centers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use licfg::data::ring_mixture;

    /// Midpoints of the crosses, read back from the markup.
    fn cross_centers(svg: &str) -> Vec<(f64, f64)> {
        svg.lines()
            .filter(|l| l.contains(r#"class="center""#))
            .map(|l| {
                let d = l.split(r#"d=""#).nth(1).unwrap().split('"').next().unwrap();
                let nums: Vec<f64> = d
                    .split(['M', 'L', ' '])
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse().unwrap())
                    .collect();
                ((nums[0] + nums[2]) / 2.0, (nums[1] + nums[3]) / 2.0)
            })
            .collect()
    }

    #[test]
    fn empty_points_draw_only_centers() {
        let ring = ring_mixture();
        let svg = render_scatter_svg(&Tensor::zeros(0, 2), ring.centers());
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<circle").count(), 0);
        assert_eq!(cross_centers(&svg).len(), 8);
    }

    #[test]
    fn ring_centers_land_on_expected_pixels() {
        let ring = ring_mixture();
        let svg = render_scatter_svg(&Tensor::zeros(0, 2), ring.centers());
        for ((px, py), c) in cross_centers(&svg).into_iter().zip(ring.centers()) {
            // viewport [-5, 5] onto [0, 500] with y flipped
            let ex = (c[0] + 5.0) / 10.0 * 500.0;
            let ey = (5.0 - c[1]) / 10.0 * 500.0;
            assert!((px - ex).abs() <= 0.01 && (py - ey).abs() <= 0.01);
        }
    }

    #[test]
    fn output_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let pts = licfg::data::sample_mixture(&ring_mixture(), 100, 1);
        let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
        emit_scatter_svg(&pts, ring_mixture().centers(), &a).unwrap();
        emit_scatter_svg(&pts, ring_mixture().centers(), &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        assert_eq!(render_scatter_svg(&pts, &[]).matches("<circle").count(), 100);
    }

    #[test]
    fn non_finite_points_are_skipped() {
        let pts = Tensor::from_rows(&[[f64::NAN, 0.0], [1.0, 1.0]]);
        assert_eq!(render_scatter_svg(&pts, &[]).matches("<circle").count(), 1);
    }
}

//! Minimal scatter-plot SVG emitter for eyeballing section diagrams.
//! Fixed viewport, one color per point group, no plotting framework.

use std::fs;
use std::path::Path;

use crate::error::Result;

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 640.0;
const MARGIN: f64 = 54.0;

/// Color cycle for per-beta groups.
const COLORS: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
];

/// One labeled group of 2-D points.
pub struct PointGroup {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Writes a scatter SVG of the groups with an axis box and group legend.
/// Bounds default to the data envelope with 5% padding; pass `bounds` to fix
/// the viewport (x_min, x_max, y_min, y_max).
pub fn write_scatter(
    path: &Path,
    title: &str,
    groups: &[PointGroup],
    bounds: Option<(f64, f64, f64, f64)>,
) -> Result<()> {
    let (x0, x1, y0, y1) = bounds.unwrap_or_else(|| data_bounds(groups));
    let sx = (WIDTH - 2.0 * MARGIN) / (x1 - x0).max(1e-12);
    let sy = (HEIGHT - 2.0 * MARGIN) / (y1 - y0).max(1e-12);
    let px = |x: f64| MARGIN + (x - x0) * sx;
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) * sy;

    let mut s = String::with_capacity(1 << 16);
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));
    s.push_str(&format!(
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" \
         stroke=\"#333\" stroke-width=\"1\"/>\n",
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    ));
    // Axis extremes.
    for (v, x, y, anchor) in [
        (x0, MARGIN, HEIGHT - MARGIN + 18.0, "middle"),
        (x1, WIDTH - MARGIN, HEIGHT - MARGIN + 18.0, "middle"),
    ] {
        s.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"{anchor}\">{v:.3}</text>\n"
        ));
    }
    for (v, y) in [(y0, HEIGHT - MARGIN), (y1, MARGIN)] {
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{v:.3}</text>\n",
            MARGIN - 6.0,
            y + 4.0
        ));
    }

    for (g, group) in groups.iter().enumerate() {
        let color = COLORS[g % COLORS.len()];
        for &(x, y) in &group.points {
            if !x.is_finite() || !y.is_finite() || x < x0 || x > x1 || y < y0 || y > y1 {
                continue;
            }
            s.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.3\" fill=\"{color}\" \
                 fill-opacity=\"0.75\"/>\n",
                px(x),
                py(y)
            ));
        }
    }

    // Legend for a manageable number of groups.
    if groups.len() <= 16 {
        for (g, group) in groups.iter().enumerate() {
            let color = COLORS[g % COLORS.len()];
            let y = MARGIN + 14.0 * g as f64 + 8.0;
            s.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{y}\" r=\"3\" fill=\"{color}\"/>\
                 <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
                WIDTH - MARGIN + 10.0,
                WIDTH - MARGIN + 17.0,
                y + 3.0,
                escape(&group.label)
            ));
        }
    }
    s.push_str("</svg>\n");
    fs::write(path, s)?;
    Ok(())
}

fn data_bounds(groups: &[PointGroup]) -> (f64, f64, f64, f64) {
    let mut x0 = f64::INFINITY;
    let mut x1 = f64::NEG_INFINITY;
    let mut y0 = f64::INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for g in groups {
        for &(x, y) in &g.points {
            if x.is_finite() && y.is_finite() {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    let pad_x = 0.05 * (x1 - x0).max(1e-9);
    let pad_y = 0.05 * (y1 - y0).max(1e-9);
    (x0 - pad_x, x1 + pad_x, y0 - pad_y, y1 + pad_y)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

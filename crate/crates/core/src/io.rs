//! CSV tables and SVG plots.
//!
//! Numbers are written with `{:.16e}` (17 significant digits, `.` decimal separator), so a
//! value read back parses to the identical `f64`.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::grid::GridField;

/// Writes a CSV table with a header row and `{:.16e}` numbers.
pub fn write_table<W: Write>(mut out: W, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Anchor colors of the heatmap ramp at positions 0, 0.25, 0.5, 0.75, 1.
pub const RAMP_ANCHORS: [(f64, [u8; 3]); 5] = [
    (0.00, [68, 1, 84]),
    (0.25, [59, 82, 139]),
    (0.50, [33, 145, 140]),
    (0.75, [94, 201, 98]),
    (1.00, [253, 231, 37]),
];

/// The 256-entry ramp, piecewise linear between [`RAMP_ANCHORS`], rounded to nearest.
pub fn color_ramp() -> [[u8; 3]; 256] {
    let mut out = [[0u8; 3]; 256];
    for (k, c) in out.iter_mut().enumerate() {
        let s = k as f64 / 255.0;
        let seg = RAMP_ANCHORS.windows(2).find(|w| s <= w[1].0).unwrap_or(&RAMP_ANCHORS[3..5]);
        let (s0, c0) = seg[0];
        let (s1, c1) = seg[1];
        let a = (s - s0) / (s1 - s0);
        for ch in 0..3 {
            c[ch] = (c0[ch] as f64 + a * (c1[ch] as f64 - c0[ch] as f64)).round() as u8;
        }
    }
    out
}

/// Heatmap of a field, one rectangle per node, min→max mapped onto the ramp.
pub fn heatmap_svg(field: &GridField, title: &str) -> String {
    let grid = field.grid();
    let n = grid.n();
    let ramp = color_ramp();
    let (lo, hi) = field
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px = (512 / n).max(1);
    let size = px * n;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" shape-rendering="crispEdges">"#,
        w = size,
        h = size + 24
    );
    let _ = writeln!(s, r#"<text x="4" y="16" font-family="sans-serif" font-size="12">{} [{lo:.3e}, {hi:.3e}]</text>"#, escape(title));
    for j in 0..n {
        for i in 0..n {
            let t = ((field.get(i, j) - lo) / span).clamp(0.0, 1.0);
            let [r, g, b] = ramp[(t * 255.0).round() as usize];
            let _ = writeln!(
                s,
                r##"<rect x="{}" y="{}" width="{px}" height="{px}" fill="#{r:02x}{g:02x}{b:02x}"/>"##,
                i * px,
                24 + (n - 1 - j) * px
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Line plot of several series sharing one x axis.
pub fn line_plot_svg(title: &str, x: &[f64], series: &[(&str, &[f64])]) -> String {
    let (w, h, pad) = (640.0, 400.0, 40.0);
    let (x0, x1) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{}">"#, h * series.len() as f64);
    let colors = ["#440154", "#21918c", "#fde725", "#3b528b", "#5ec962"];
    for (k, (name, ys)) in series.iter().enumerate() {
        let off = h * k as f64;
        let (y0, y1) = ys
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let yspan = if y1 > y0 { y1 - y0 } else { 1.0 };
        let xspan = if x1 > x0 { x1 - x0 } else { 1.0 };
        let pts: Vec<String> = x
            .iter()
            .zip(ys.iter())
            .filter(|(_, y)| y.is_finite())
            .map(|(xv, yv)| {
                let px = pad + (xv - x0) / xspan * (w - 2.0 * pad);
                let py = off + h - pad - (yv - y0) / yspan * (h - 2.0 * pad);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<text x="{pad}" y="{:.1}" font-family="sans-serif" font-size="12">{}: {} [{y0:.3e}, {y1:.3e}]</text>"#,
            off + 20.0,
            escape(title),
            escape(name)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{pad}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#888"/>"##,
            off + pad,
            w - 2.0 * pad,
            h - 2.0 * pad
        );
        let _ = writeln!(
            s,
            r##"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"##,
            colors[k % colors.len()],
            pts.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

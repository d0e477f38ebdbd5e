//! Minimal SVG plots: one panel per latent dimension.

use std::fmt::Write;

use super::{AlignmentMetrics, TrajectoryExport};

const PANEL: f64 = 320.0;
const MARGIN: f64 = 40.0;

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        Self { lo, hi }
    }

    fn map(&self, v: f64, from: f64, to: f64) -> f64 {
        from + (v - self.lo) / (self.hi - self.lo) * (to - from)
    }
}

fn open(out: &mut String, panels: usize, title: &str) {
    let width = panels.max(1) as f64 * (PANEL + MARGIN) + MARGIN;
    let height = PANEL + 2.0 * MARGIN;
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="20" font-size="14">{}</text>"#, escape(title));
}

fn frame(out: &mut String, x0: f64, label_x: &str, label_y: &str, dim: usize) {
    let y0 = MARGIN;
    let _ = writeln!(
        out,
        r#"<rect x="{x0}" y="{y0}" width="{PANEL}" height="{PANEL}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{label_x} (dim {dim})</text>"#,
        x0 + PANEL / 2.0,
        y0 + PANEL + 28.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="11" transform="rotate(-90 {} {})" text-anchor="middle">{label_y}</text>"#,
        x0 - 8.0,
        y0 + PANEL / 2.0,
        x0 - 8.0,
        y0 + PANEL / 2.0
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `delta_ode` against `delta_rs` with the diagonal; both axes share a range.
pub fn scatter_svg(metrics: &[AlignmentMetrics], d: usize, title: &str) -> String {
    let mut out = String::new();
    open(&mut out, d, title);
    for j in 0..d {
        let x0 = MARGIN + j as f64 * (PANEL + MARGIN);
        let (y_top, y_bottom) = (MARGIN, MARGIN + PANEL);
        let axis = Axis::fit(
            metrics
                .iter()
                .flat_map(|m| [m.delta_rs[j], m.delta_ode[j]])
                .chain([0.0]),
        );
        frame(&mut out, x0, "misalignment R/S", "ODE dynamics range", j);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="grey" stroke-dasharray="4 3"/>"#,
            axis.map(axis.lo, x0, x0 + PANEL),
            axis.map(axis.lo, y_bottom, y_top),
            axis.map(axis.hi, x0, x0 + PANEL),
            axis.map(axis.hi, y_bottom, y_top)
        );
        for m in metrics {
            let colour = if m.above_diagonal[j] { "steelblue" } else { "firebrick" };
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{colour}" fill-opacity="0.6"><title>{}</title></circle>"#,
                axis.map(m.delta_rs[j], x0, x0 + PANEL),
                axis.map(m.delta_ode[j], y_bottom, y_top),
                escape(&m.patient_id)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Encodings (squares for R, circles for S) and the pooled trajectory.
pub fn trajectory_svg(export: &TrajectoryExport) -> String {
    let d = export.values.first().map_or(0, Vec::len);
    let mut out = String::new();
    open(&mut out, d, &format!("patient {}", export.patient_id));
    let tx = Axis::fit(export.times.iter().chain(&export.r_times).chain(&export.s_times).copied());
    for j in 0..d {
        let x0 = MARGIN + j as f64 * (PANEL + MARGIN);
        let (y_top, y_bottom) = (MARGIN, MARGIN + PANEL);
        let ty = Axis::fit(
            export
                .values
                .iter()
                .chain(&export.r_means)
                .chain(&export.s_means)
                .map(|v| v[j]),
        );
        frame(&mut out, x0, "time", "latent value", j);
        let path: Vec<String> = export
            .times
            .iter()
            .zip(&export.values)
            .map(|(t, v)| format!("{:.2},{:.2}", tx.map(*t, x0, x0 + PANEL), ty.map(v[j], y_bottom, y_top)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for (t, v) in export.r_times.iter().zip(&export.r_means) {
            let (x, y) = (tx.map(*t, x0, x0 + PANEL), ty.map(v[j], y_bottom, y_top));
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="6" height="6" fill="darkorange"/>"#,
                x - 3.0,
                y - 3.0
            );
        }
        for (t, v) in export.s_times.iter().zip(&export.s_means) {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="seagreen"/>"#,
                tx.map(*t, x0, x0 + PANEL),
                ty.map(v[j], y_bottom, y_top)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

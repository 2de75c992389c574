//! Minimal SVG line charts.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 320.0;
const PAD: f64 = 40.0;

pub struct Line<'a> {
    pub label: &'a str,
    pub color: &'a str,
    /// `(x, y)` points; non-finite values are skipped.
    pub points: Vec<(f64, f64)>,
}

fn bounds(lines: &[Line]) -> (f64, f64, f64, f64) {
    let pts = lines.iter().flat_map(|l| l.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    (x0, x1, y0, y1)
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, lines: &[Line]) -> String {
    let (x0, x1, y0, y1) = bounds(lines);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, esc(title));
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black" stroke-width="1"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#, W / 2.0, H - 8.0, esc(x_label));
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle" transform="rotate(-90 12 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(y_label)
    );
    for (v, y) in [(y0, H - PAD), (y1, PAD)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.3}</text>"#, PAD - 4.0);
    }
    for (v, x) in [(x0, PAD), (x1, W - PAD)] {
        let _ = writeln!(s, r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{v}</text>"#, H - PAD + 14.0);
    }
    for (i, l) in lines.iter().enumerate() {
        let pts: Vec<String> = l
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#, l.color, pts.join(" "));
        let ly = PAD + 14.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/>"#, W - PAD - 110.0, W - PAD - 90.0, l.color);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#, W - PAD - 85.0, ly + 4.0, esc(l.label));
    }
    s.push_str("</svg>\n");
    s
}

fn esc(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// History, then truth and forecast on the steps after it.
pub fn forecast_plot(title: &str, history: &[f64], truth: &[f64], forecast: &[f64]) -> String {
    let n = history.len();
    let at = |off: usize, v: &[f64]| v.iter().enumerate().map(|(i, &y)| ((off + i) as f64, y)).collect::<Vec<_>>();
    // join the truth and forecast lines to the last observed point
    let mut truth_pts = at(n.saturating_sub(1), &history[n.saturating_sub(1)..]);
    truth_pts.extend(at(n, truth));
    let mut fc_pts = at(n.saturating_sub(1), &history[n.saturating_sub(1)..]);
    fc_pts.extend(at(n, forecast));
    line_chart(
        title,
        "step",
        "value",
        &[
            Line { label: "history", color: "#555555", points: at(0, history) },
            Line { label: "truth", color: "#1f77b4", points: truth_pts },
            Line { label: "forecast", color: "#d62728", points: fc_pts },
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_and_deterministic() {
        let a = forecast_plot("w<0>", &[1.0, 2.0, 3.0], &[4.0, 5.0], &[4.5, f64::NAN]);
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("w&lt;0&gt;"));
        assert_eq!(a.matches("<polyline").count(), 3);
        assert_eq!(a, forecast_plot("w<0>", &[1.0, 2.0, 3.0], &[4.0, 5.0], &[4.5, f64::NAN]));
    }

    #[test]
    fn flat_series_does_not_divide_by_zero() {
        let s = line_chart("flat", "x", "y", &[Line { label: "c", color: "red", points: vec![(0.0, 1.0), (1.0, 1.0)] }]);
        assert!(!s.contains("NaN") && !s.contains("inf"));
    }
}

//! CSV formatting and small hand-written SVG plots. CSV is the source of
//! truth; plots are conveniences.

use std::fmt::Write as _;

use crate::classifiers::{BodyLabel, ConfusionMatrix, N_CLASSES};

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Comma-separated values terminated by a newline.
pub fn csv_row(values: &[f64]) -> String {
    let mut s = values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Blue-white ramp for values in [0, 1].
fn ramp(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let c = |lo: f64, hi: f64| (lo + (hi - lo) * v).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(255.0, 8.0), c(255.0, 81.0), c(255.0, 156.0))
}

/// Row-normalized confusion matrix heatmap.
pub fn confusion_svg(cm: &ConfusionMatrix, title: &str) -> String {
    let cell = 56.0;
    let (left, top) = (70.0, 60.0);
    let size = left + cell * N_CLASSES as f64 + 20.0;
    let n = cm.normalized();
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{}" font-family="sans-serif" font-size="12">"#,
        size + 30.0
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, size / 2.0, esc(title)).unwrap();
    for (i, b) in BodyLabel::ALL.iter().enumerate() {
        let y = top + i as f64 * cell;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 6.0, y + cell / 2.0 + 4.0, b).unwrap();
        let x = left + i as f64 * cell;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, x + cell / 2.0, top - 8.0, b).unwrap();
        for j in 0..N_CLASSES {
            let x = left + j as f64 * cell;
            let v = n[i][j];
            writeln!(s, r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{}" stroke="#999"/>"##, ramp(v)).unwrap();
            let color = if v > 0.5 { "white" } else { "black" };
            writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{color}">{:.1}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                100.0 * v
            )
            .unwrap();
        }
    }
    let bottom = top + cell * N_CLASSES as f64 + 20.0;
    writeln!(s, r#"<text x="{}" y="{bottom}" text-anchor="middle">predicted (row: true), % of row</text>"#, size / 2.0).unwrap();
    s.push_str("</svg>\n");
    s
}

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
    pub color: &'a str,
}

/// Line plot with optional horizontal bands at `+-limit`.
pub fn line_svg(series: &[Series], title: &str, x_label: &str, y_label: &str, limit: Option<f64>) -> String {
    let (w, h) = (640.0, 360.0);
    let (l, r, t, b) = (60.0, 20.0, 30.0, 40.0);
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts.filter(|p| p.0.is_finite() && p.1.is_finite()) {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if let Some(lim) = limit {
        y0 = y0.min(-lim);
        y1 = y1.max(lim);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| l + (x - x0) / (x1 - x0) * (w - l - r);
    let sy = |y: f64| h - b - (y - y0) / (y1 - y0) * (h - t - b);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, esc(title)).unwrap();
    writeln!(s, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, w - l - r, h - t - b).unwrap();
    if let Some(lim) = limit {
        for v in [lim, -lim] {
            writeln!(s, r##"<line x1="{l}" x2="{}" y1="{1}" y2="{1}" stroke="#c00" stroke-dasharray="4 3"/>"##, w - r, sy(v)).unwrap();
        }
    }
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{:.3}</text>"#, sx(fx), h - b + 16.0, fx).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, l - 4.0, sy(fy) + 4.0, fy).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 6.0, esc(x_label)).unwrap();
    writeln!(s, r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#, h / 2.0, h / 2.0, esc(y_label)).unwrap();
    for (k, ser) in series.iter().enumerate() {
        let path: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        writeln!(s, r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#, ser.color, path.join(" ")).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" fill="{}">{}</text>"#, l + 8.0, t + 16.0 + 14.0 * k as f64, ser.color, esc(ser.name)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Heatmap of a value over a rectangular (row, column) grid.
pub fn grid_svg(rows: &[String], cols: &[String], values: &[Vec<f64>], title: &str) -> String {
    let cell = 40.0;
    let (left, top) = (60.0, 50.0);
    let (w, h) = (left + cell * cols.len() as f64 + 20.0, top + cell * rows.len() as f64 + 30.0);
    let finite = values.iter().flatten().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, |a, v| a.min(*v));
    let hi = finite.fold(f64::NEG_INFINITY, |a, v| a.max(*v));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, w / 2.0, esc(title)).unwrap();
    for (j, c) in cols.iter().enumerate() {
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + (j as f64 + 0.5) * cell, top - 6.0, esc(c)).unwrap();
    }
    for (i, r) in rows.iter().enumerate() {
        let y = top + i as f64 * cell;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 6.0, y + cell / 2.0 + 4.0, esc(r)).unwrap();
        for (j, v) in values[i].iter().enumerate() {
            let x = left + j as f64 * cell;
            let fill = if v.is_finite() { ramp((v - lo) / span) } else { "#eee".into() };
            writeln!(s, r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="#999"/>"##).unwrap();
            if v.is_finite() {
                writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{:.2}</text>"#, x + cell / 2.0, y + cell / 2.0 + 4.0, v).unwrap();
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for v in [0.1 + 0.2, 1.0 / 3.0, -1e-300, 12345.678] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(csv_row(&[1.0, 0.5]), "1,0.5\n");
    }

    #[test]
    fn svgs_are_closed_documents() {
        let cm = ConfusionMatrix::default();
        assert!(confusion_svg(&cm, "a<b").trim_end().ends_with("</svg>"));
        let s = line_svg(
            &[Series {
                name: "x",
                points: vec![(0.0, 1.0), (1.0, 2.0)],
                color: "black",
            }],
            "t",
            "x",
            "y",
            Some(0.5),
        );
        assert!(s.contains("<polyline"));
        let g = grid_svg(&["1".into()], &["a".into(), "b".into()], &[vec![0.5, f64::NAN]], "g");
        assert_eq!(g.matches("<rect").count(), 2);
    }
}

//! Minimal self-contained SVG line charts for the sweep figures. No
//! styling ambitions: two polylines, axes, ticks, and a legend, written
//! with fixed-precision coordinates so output is reproducible.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 420.0;
const ML: f64 = 64.0; // left margin, room for y labels
const MR: f64 = 24.0;
const MT: f64 = 40.0;
const MB: f64 = 52.0;

pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    /// One value per x position; `None` leaves a gap.
    pub values: Vec<Option<f64>>,
}

/// Renders one chart. `xs` are the shared x positions (population
/// sizes); every series must be the same length.
pub fn line_chart(title: &str, y_label: &str, xs: &[usize], series: &[Series]) -> String {
    assert!(series.iter().all(|s| s.values.len() == xs.len()));
    let flat: Vec<f64> = series.iter().flat_map(|s| s.values.iter().flatten().copied()).collect();
    let (y_min, y_max) = y_bounds(&flat);
    let x_min = xs.first().copied().unwrap_or(0) as f64;
    let x_max = xs.last().copied().unwrap_or(1) as f64;
    let x_span = (x_max - x_min).max(1.0);

    let px = |x: f64| ML + (x - x_min) / x_span * (W - ML - MR);
    let py = |y: f64| H - MB - (y - y_min) / (y_max - y_min) * (H - MT - MB);

    let mut svg = String::new();
    write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    svg.push('\n');
    writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        W / 2.0,
        title
    )
    .unwrap();

    // axes
    writeln!(
        svg,
        r#"<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{:.1}" stroke="black"/>"#,
        H - MB
    )
    .unwrap();
    writeln!(
        svg,
        r#"<line x1="{ML}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        H - MB,
        W - MR,
        H - MB
    )
    .unwrap();

    for &x in xs {
        let xp = px(x as f64);
        writeln!(
            svg,
            r#"<line x1="{xp:.1}" y1="{:.1}" x2="{xp:.1}" y2="{:.1}" stroke="black"/>"#,
            H - MB,
            H - MB + 5.0
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{xp:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{x}</text>"#,
            H - MB + 20.0
        )
        .unwrap();
    }
    for tick in y_ticks(y_min, y_max) {
        let yp = py(tick);
        writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{yp:.1}" x2="{ML}" y2="{yp:.1}" stroke="black"/>"#,
            ML - 5.0
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="end">{}</text>"#,
            ML - 9.0,
            yp + 4.0,
            trim_zeros(tick)
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="16" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0,
        y_label
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">total users</text>"#,
        (ML + W - MR) / 2.0,
        H - 12.0
    )
    .unwrap();

    for (i, s) in series.iter().enumerate() {
        // split on gaps so a missing cell breaks the line
        let mut segment: Vec<String> = Vec::new();
        let mut segments: Vec<Vec<String>> = Vec::new();
        for (&x, v) in xs.iter().zip(&s.values) {
            match v {
                Some(y) => segment.push(format!("{:.1},{:.1}", px(x as f64), py(*y))),
                None => {
                    if !segment.is_empty() {
                        segments.push(std::mem::take(&mut segment));
                    }
                }
            }
        }
        if !segment.is_empty() {
            segments.push(segment);
        }
        for seg in segments {
            if seg.len() == 1 {
                let (x, y) = seg[0].split_once(',').unwrap();
                writeln!(svg, r#"<circle cx="{x}" cy="{y}" r="3" fill="{}"/>"#, s.color).unwrap();
            } else {
                writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
                    seg.join(" "),
                    s.color
                )
                .unwrap();
            }
        }
        for (&x, v) in xs.iter().zip(&s.values) {
            if let Some(y) = v {
                writeln!(
                    svg,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{}"/>"#,
                    px(x as f64),
                    py(*y),
                    s.color
                )
                .unwrap();
            }
        }
        let ly = MT + 16.0 * i as f64;
        writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"/>"#,
            W - MR - 110.0,
            W - MR - 86.0,
            s.color
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">{}</text>"#,
            W - MR - 80.0,
            ly + 4.0,
            s.name
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

/// Padded value bounds; a degenerate span widens to a unit band.
fn y_bounds(values: &[f64]) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if !min.is_finite() {
        return (0.0, 1.0);
    }
    if (max - min).abs() < 1e-9 {
        return (min - 0.5, max + 0.5);
    }
    let pad = (max - min) * 0.08;
    let lo = if min >= 0.0 { (min - pad).max(0.0) } else { min - pad };
    (lo, max + pad)
}

fn y_ticks(min: f64, max: f64) -> Vec<f64> {
    let span = max - min;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| span / s <= 6.0)
        .unwrap_or(mag * 10.0);
    let mut ticks = Vec::new();
    let mut t = (min / step).ceil() * step;
    while t <= max + 1e-9 {
        ticks.push(t);
        t += step;
    }
    ticks
}

fn trim_zeros(v: f64) -> String {
    let s = format!("{:.2}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.to_string()
    }
}

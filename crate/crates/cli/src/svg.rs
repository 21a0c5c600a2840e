//! Minimal SVG 1.1 figures: pole maps and line plots.

use std::fmt::Write;

const SIZE: f64 = 480.0;
const PAD: f64 = 48.0;

fn header(out: &mut String, title: &str, manifest: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, "<!-- manifest: {} -->", escape(manifest));
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        SIZE / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace("--", "- -")
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        return format!("{v:.2e}");
    }
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Black at `t = 0` to blue at `t = 1`.
fn shade(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    format!("rgb(0,0,{})", (255.0 * t).round() as u8)
}

/// Poles in the complex plane with the unit circle as the only `<circle>`.
/// Each pole is a cross colored by its parameter value.
pub fn pole_map(poles: &[(f64, f64, f64)], title: &str, manifest: &str) -> String {
    let extent = poles
        .iter()
        .fold(1.1f64, |e, (_, re, im)| e.max(re.abs() * 1.05).max(im.abs() * 1.05));
    let scale = (SIZE / 2.0 - PAD) / extent;
    let c = SIZE / 2.0;
    let map = |re: f64, im: f64| (c + re * scale, c - im * scale);
    let mut out = String::new();
    header(&mut out, title, manifest);
    let _ = writeln!(
        out,
        r##"<path d="M {} {c} H {} M {c} {} V {}" stroke="#999" stroke-width="1" fill="none"/>"##,
        PAD,
        SIZE - PAD,
        PAD,
        SIZE - PAD
    );
    let _ = writeln!(
        out,
        r##"<circle cx="{c}" cy="{c}" r="{}" stroke="#c00" stroke-width="1" fill="none"/>"##,
        scale
    );
    for &(d, re, im) in poles {
        let (x, y) = map(re, im);
        let _ = writeln!(
            out,
            r#"<path class="pole" d="M {:.3} {:.3} l 6 6 m 0 -6 l -6 6" stroke="{}" stroke-width="1.2" fill="none"/>"#,
            x - 3.0,
            y - 3.0,
            shade((d + 1.0) / 2.0)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// A named polyline; `shade` in `[0, 1]` picks its color.
pub struct Series {
    pub shade: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn line_plot(series: &[Series], title: &str, xlabel: &str, ylabel: &str, manifest: &str) -> String {
    let all = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let w = SIZE - 2.0 * PAD;
    let map = |x: f64, y: f64| (PAD + (x - x0) / (x1 - x0) * w, SIZE - PAD - (y - y0) / (y1 - y0) * w);
    let mut out = String::new();
    header(&mut out, title, manifest);
    let _ = writeln!(
        out,
        r##"<path d="M {PAD} {PAD} V {} H {}" stroke="#333" stroke-width="1" fill="none"/>"##,
        SIZE - PAD,
        SIZE - PAD
    );
    for (text, x, y, anchor) in [
        (tick(x0), PAD, SIZE - PAD + 16.0, "start"),
        (tick(x1), SIZE - PAD, SIZE - PAD + 16.0, "end"),
        (tick(y0), PAD - 4.0, SIZE - PAD, "end"),
        (tick(y1), PAD - 4.0, PAD + 4.0, "end"),
        (xlabel.to_string(), SIZE / 2.0, SIZE - 12.0, "middle"),
    ] {
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{}</text>"#,
            escape(&text)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
        SIZE / 2.0,
        SIZE / 2.0,
        escape(ylabel)
    );
    for s in series {
        let mut d = String::new();
        for (i, &(x, y)) in s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).enumerate() {
            let (px, py) = map(x, y);
            let _ = write!(d, "{}{px:.3} {py:.3} ", if i == 0 { "M " } else { "L " });
        }
        if !d.is_empty() {
            let _ = writeln!(
                out,
                r#"<path d="{}" stroke="{}" stroke-width="1.2" fill="none"/>"#,
                d.trim_end(),
                shade(s.shade)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

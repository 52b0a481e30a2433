//! CSV and SVG writers shared by the pipelines.

use std::fmt::Write as _;

use crate::metrics::Vec2;

/// Format like C's `%.12g`.
pub fn fmt_g(x: f64) -> String {
    fmt_g_prec(x, 12)
}

pub fn fmt_g_prec(x: f64, prec: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = prec.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -4 || exp >= p as i32 {
        let mant = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// CSV document with a header row and `%.12g` numerics.
pub fn csv_string<R: AsRef<[f64]>>(header: &[&str], rows: &[R]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r.as_ref().iter().map(|&v| fmt_g(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SvgStyle {
    Line,
    ClosedLine,
    Markers,
}

#[derive(Clone, Debug)]
pub struct SvgSeries {
    pub label: String,
    pub color: String,
    pub style: SvgStyle,
    pub points: Vec<Vec2>,
}

/// Self-contained SVG plot of planar point sets, with axes and the square
/// `[-1, 1]²` drawn for scale.
pub fn svg_plot(title: &str, series: &[SvgSeries]) -> String {
    let size = 600.0;
    let margin = 40.0;
    let mut extent: f64 = 1.1;
    for s in series {
        for p in &s.points {
            if p[0].is_finite() && p[1].is_finite() {
                extent = extent.max(1.1 * p[0].abs()).max(1.1 * p[1].abs());
            }
        }
    }
    let scale = (size - 2.0 * margin) / (2.0 * extent);
    let map = |p: &Vec2| (size / 2.0 + p[0] * scale, size / 2.0 - p[1] * scale);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<title>{}</title>"#, escape(title));
    let c = size / 2.0;
    let _ = writeln!(
        svg,
        r##"<g stroke="#999" stroke-width="1"><line x1="{m}" y1="{c}" x2="{e}" y2="{c}"/><line x1="{c}" y1="{m}" x2="{c}" y2="{e}"/></g>"##,
        m = margin,
        e = size - margin
    );
    let (sx0, sy0) = map(&Vec2::new(-1.0, 1.0));
    let _ = writeln!(
        svg,
        r##"<rect x="{sx0:.3}" y="{sy0:.3}" width="{w:.3}" height="{w:.3}" fill="none" stroke="#ccc" stroke-dasharray="4 3"/>"##,
        w = 2.0 * scale
    );
    for (label, p) in [("1", Vec2::new(1.0, 0.0)), ("-1", Vec2::new(-1.0, 0.0))] {
        let (x, y) = map(&p);
        let _ = writeln!(svg, r##"<text x="{x:.3}" y="{:.3}" font-size="11" fill="#666" text-anchor="middle">{label}</text>"##, y + 14.0);
    }
    for (label, p) in [("1", Vec2::new(0.0, 1.0)), ("-1", Vec2::new(0.0, -1.0))] {
        let (x, y) = map(&p);
        let _ = writeln!(svg, r##"<text x="{:.3}" y="{:.3}" font-size="11" fill="#666">{label}</text>"##, x + 4.0, y + 4.0);
    }
    let _ = writeln!(svg, r##"<text x="{c}" y="20" font-size="14" text-anchor="middle">{}</text>"##, escape(title));
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = s.points.iter().filter(|p| p[0].is_finite() && p[1].is_finite()).map(map).collect();
        match s.style {
            SvgStyle::Line | SvgStyle::ClosedLine => {
                let mut d = String::new();
                for (j, (x, y)) in pts.iter().enumerate() {
                    let _ = write!(d, "{}{x:.3},{y:.3} ", if j == 0 { 'M' } else { 'L' });
                }
                if s.style == SvgStyle::ClosedLine {
                    d.push('Z');
                }
                let _ = writeln!(svg, r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, d.trim_end(), s.color);
            }
            SvgStyle::Markers => {
                let _ = writeln!(svg, r#"<g fill="{}">"#, s.color);
                for (x, y) in &pts {
                    let _ = writeln!(svg, r#"<circle cx="{x:.3}" cy="{y:.3}" r="2.5"/>"#);
                }
                let _ = writeln!(svg, "</g>");
            }
        }
        let ly = 40.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{ly}" font-size="12" fill="{}">{}</text>"#,
            size - margin - 150.0,
            s.color,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

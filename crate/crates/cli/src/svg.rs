//! Small hand-written SVG bar charts: one panel per metric, one bar per run
//! label, whiskers for the standard deviation.

use std::fmt::Write;

const PANEL_W: f64 = 180.0;
const PANEL_H: f64 = 160.0;
const MARGIN: f64 = 30.0;
const COLORS: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub label: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub bars: Vec<Bar>,
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn finite(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

fn panel(out: &mut String, p: &Panel, x0: f64, y0: f64) {
    let lo = p.bars.iter().map(|b| finite(b.mean) - finite(b.std)).fold(0.0, f64::min);
    let hi = p.bars.iter().map(|b| finite(b.mean) + finite(b.std)).fold(0.0, f64::max);
    let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
    let y = |v: f64| y0 + PANEL_H - (finite(v) - lo) / span * PANEL_H;
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
        x0 + PANEL_W / 2.0,
        y0 - 8.0,
        escape(&p.title)
    );
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        y(0.0),
        x0 + PANEL_W,
        y(0.0)
    );
    let n = p.bars.len().max(1) as f64;
    let slot = PANEL_W / n;
    for (i, b) in p.bars.iter().enumerate() {
        let x = x0 + slot * i as f64 + slot * 0.15;
        let w = slot * 0.7;
        let (top, bottom) = if b.mean >= 0.0 { (y(b.mean), y(0.0)) } else { (y(0.0), y(b.mean)) };
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{top:.1}" width="{w:.1}" height="{:.1}" fill="{}"><title>{} {:.4} ± {:.4}</title></rect>"#,
            (bottom - top).max(0.0),
            COLORS[i % COLORS.len()],
            escape(&b.label),
            b.mean,
            b.std
        );
        let cx = x + w / 2.0;
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            y(b.mean - b.std),
            y(b.mean + b.std)
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{:.1}" font-size="9" text-anchor="middle">{:.2}</text>"#,
            y0 + PANEL_H + 12.0,
            b.mean
        );
    }
}

/// A complete SVG document with the panels laid out in one row and a legend.
pub fn render(panels: &[Panel]) -> String {
    let labels: Vec<&str> = panels
        .first()
        .map(|p| p.bars.iter().map(|b| b.label.as_str()).collect())
        .unwrap_or_default();
    let width = MARGIN + panels.len().max(1) as f64 * (PANEL_W + MARGIN);
    let height = PANEL_H + 3.0 * MARGIN + 16.0 * labels.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        panel(&mut out, p, MARGIN + i as f64 * (PANEL_W + MARGIN), MARGIN);
    }
    let ly = MARGIN * 2.0 + PANEL_H;
    for (i, l) in labels.iter().enumerate() {
        let yy = ly + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
            yy,
            COLORS[i % COLORS.len()],
            MARGIN + 14.0,
            yy + 9.0,
            escape(l)
        );
    }
    out.push_str("</svg>\n");
    out
}

//! Minimal SVG line plot of an MTE curve with its band.

use std::fmt::Write;

use crate::curve::MteCurve;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;

pub fn curve_svg(curve: &MteCurve, title: &str) -> String {
    let mut ys: Vec<f64> = curve.mte.clone();
    if let (Some(lo), Some(hi)) = (&curve.lo, &curve.hi) {
        ys.extend(lo);
        ys.extend(hi);
    }
    let (mut y0, mut y1) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(y1 > y0) {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let (x0, x1) = (curve.grid[0], *curve.grid.last().unwrap());
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    if let (Some(lo), Some(hi)) = (&curve.lo, &curve.hi) {
        let mut pts: Vec<String> = curve.grid.iter().zip(hi).map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
        pts.extend(curve.grid.iter().zip(lo).rev().map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))));
        let _ = writeln!(s, r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##, pts.join(" "));
    }
    let line: Vec<String> = curve.grid.iter().zip(&curve.mte).map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##, line.join(" "));
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(s, r##"<line x1="{MARGIN}" y1="{z:.2}" x2="{:.2}" y2="{z:.2}" stroke="#999" stroke-dasharray="4 3"/>"##, W - MARGIN, z = py(0.0));
    }
    let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{b:.2}" x2="{:.2}" y2="{b:.2}" stroke="black"/>"#, W - MARGIN, b = H - MARGIN);
    let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{:.2}" stroke="black"/>"#, H - MARGIN);
    for k in 0..=4 {
        let x = x0 + (x1 - x0) * k as f64 / 4.0;
        let y = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x:.2}</text>"#, px(x), H - MARGIN + 18.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y:.1}</text>"#, MARGIN - 6.0, py(y) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">participation probability F</text>"#, W / 2.0, H - 14.0);
    let _ = writeln!(s, r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">MTE (hours/week)</text>"#, H / 2.0, H / 2.0);
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

//! Minimal self-contained SVG figures.

use std::fmt::Write;

use super::export::{CompatSummaryRow, RolesSummaryRow};
use super::CompatMode;

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// x in [0, 1], y in [-1, 1].
fn px(x: f64) -> f64 {
    PAD + x.clamp(0.0, 1.0) * (W - 2.0 * PAD)
}

fn py(y: f64) -> f64 {
    let t = (y.clamp(-1.0, 1.0) + 1.0) / 2.0;
    H - PAD - t * (H - 2.0 * PAD)
}

fn frame(title: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = write!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        W / 2.0,
        esc(title)
    );
    let (x0, x1, y0, y1) = (px(0.0), px(1.0), py(-1.0), py(1.0));
    let _ = write!(
        s,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    let _ = write!(
        s,
        r##"<line x1="{x0}" y1="{z}" x2="{x1}" y2="{z}" stroke="#888" stroke-dasharray="4 3"/>"##,
        z = py(0.0)
    );
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="middle">{v:.2}</text>"#, px(v), y0 + 14.0);
        let yv = -1.0 + 2.0 * v;
        let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="end">{yv:.1}</text>"#, x0 - 4.0, py(yv) + 4.0);
    }
    let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="middle">ω of past group</text>"#, W / 2.0, H - 8.0);
    let _ = write!(
        s,
        r#"<text x="12" y="{}" text-anchor="middle" transform="rotate(-90 12 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(y_label)
    );
    s
}

/// Improvement (mixed win rate minus ω) against ω, with Wilson bars.
pub fn compat_svg(mode: CompatMode, rows: &[CompatSummaryRow]) -> String {
    let mut s = frame(&format!("frontier-{mode} compatibility"), "improvement over ω");
    for r in rows {
        let color = if r.synthetic { COLORS[1] } else { COLORS[0] };
        let x = px(r.omega);
        let _ = write!(
            s,
            r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="{color}"/>"#,
            py(r.ci_low - r.omega),
            py(r.ci_high - r.omega)
        );
        let _ = write!(
            s,
            r#"<circle cx="{x}" cy="{}" r="4" fill="{color}"><title>v{} ω={} improvement={}</title></circle>"#,
            py(r.improvement),
            r.version,
            r.omega,
            r.improvement
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Decline against ω, one line per agent type.
pub fn roles_svg(type_names: &[String], rows: &[RolesSummaryRow]) -> String {
    let mut s = frame("win-rate decline by forced type", "decline vs frontier Ω");
    for (t, name) in type_names.iter().enumerate() {
        let color = COLORS[t % COLORS.len()];
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.type_idx == t && !r.synthetic)
            .map(|r| (r.omega, r.decline))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if !pts.is_empty() {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{},{}", px(x), py(y))).collect();
            let _ = write!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
            for (x, y) in &pts {
                let _ = write!(s, r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#, px(*x), py(*y));
            }
        }
        let ly = PAD + 14.0 * t as f64;
        let _ = write!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            W - PAD - 80.0,
            ly,
            W - PAD - 66.0,
            ly + 9.0,
            esc(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

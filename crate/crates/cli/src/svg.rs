//! Minimal log-log scatter plots written as SVG markup.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;

/// A straight line `y = slope·x + intercept` in log coordinates.
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
    pub label: String,
    pub dashed: bool,
}

/// Scatter of `(ln x, ln y)` points plus overlay lines. Non-finite points
/// are dropped.
pub fn loglog(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)], lines: &[Line]) -> String {
    let pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = pts.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |a, p| (a.0.min(p.0), a.1.max(p.0), a.2.min(p.1), a.3.max(p.1)),
    );
    if pts.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let pad_range = |lo: &mut f64, hi: &mut f64| {
        let span = (*hi - *lo).max(1e-3);
        *lo -= 0.08 * span;
        *hi += 0.08 * span;
    };
    pad_range(&mut x0, &mut x1);
    pad_range(&mut y0, &mut y1);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{:.2}</text>"#, sx(xv), H - PAD + 16.0, xv);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.2}</text>"#, PAD - 6.0, sy(yv) + 4.0, yv);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, esc(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(ylabel)
    );
    let _ = writeln!(s, r#"<clipPath id="plot"><rect x="{PAD}" y="{PAD}" width="{}" height="{}"/></clipPath>"#, W - 2.0 * PAD, H - 2.0 * PAD);
    for (k, l) in lines.iter().enumerate() {
        let colour = if l.dashed { "#888888" } else { "#c0392b" };
        let dash = if l.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{colour}"{dash} clip-path="url(#plot)"/>"#,
            sx(x0),
            sy(l.slope * x0 + l.intercept),
            sx(x1),
            sy(l.slope * x1 + l.intercept)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#,
            PAD + 8.0,
            PAD + 16.0 + 14.0 * k as f64,
            esc(&l.label)
        );
    }
    for &(x, y) in &pts {
        let _ = writeln!(s, r##"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="#2c3e50"/>"##, sx(x), sy(y));
    }
    s.push_str("</svg>\n");
    s
}

fn esc(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emits_points_and_lines() {
        let pts = [(1.0, -1.0), (2.0, -1.5), (3.0, -2.0)];
        let line = Line {
            slope: -0.5,
            intercept: -0.5,
            label: "fit".into(),
            dashed: false,
        };
        let svg = loglog("t", "ln x", "ln y", &pts, &[line]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg.matches("<line").count(), 1);
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn empty_input_is_still_valid() {
        let svg = loglog("a<b", "x", "y", &[(f64::NAN, 1.0)], &[]);
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<circle").count(), 0);
    }
}

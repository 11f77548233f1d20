//! Minimal deterministic SVG line plots. Coordinates are printed with a
//! fixed number of decimals so identical data gives identical bytes.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"];

#[derive(Debug, Clone, PartialEq)]
pub struct LinePlot {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

impl LinePlot {
    pub fn new(name: &str, title: &str, x_label: &str, y_label: &str) -> Self {
        Self { name: name.into(), title: title.into(), x_label: x_label.into(), y_label: y_label.into(), series: vec![] }
    }

    pub fn with(mut self, label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        self.series.push((label.into(), points));
        self
    }

    fn finite_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.series.iter().flat_map(|s| s.1.iter().copied()).filter(|p| p.0.is_finite() && p.1.is_finite())
    }

    /// None when there is nothing to draw.
    pub fn to_svg(&self) -> Option<String> {
        let pts: Vec<(f64, f64)> = self.finite_points().collect();
        if pts.is_empty() {
            return None;
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in &pts {
            x0 = x0.min(*x);
            x1 = x1.max(*x);
            y0 = y0.min(*y);
            y1 = y1.max(*y);
        }
        let pad = |a: f64, b: f64| if b - a > 0.0 { (a, b) } else { (a - 0.5 * a.abs().max(1.0), b + 0.5 * b.abs().max(1.0)) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, esc(&self.title));
        let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#, sx(xv), TOP + ph + 16.0, tick(xv));
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#, LEFT - 6.0, sy(yv) + 4.0, tick(yv));
            let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#dddddd"/>"##, sy(yv), LEFT + pw);
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, esc(&self.x_label));
        let _ = writeln!(s, r#"<text x="16" y="{0:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {0:.1})">{1}</text>"#, TOP + ph / 2.0, esc(&self.y_label));
        for (k, (label, points)) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let path: Vec<String> = points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            let ly = TOP + 14.0 + 16.0 * k as f64;
            let lx = LEFT + pw + 10.0;
            let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly:.1}" x2="{}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#, lx + 24.0, ly + 4.0, esc(label));
        }
        s.push_str("</svg>\n");
        Some(s)
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_plot_has_no_svg() {
        assert!(LinePlot::new("e", "t", "x", "y").to_svg().is_none());
        assert!(LinePlot::new("e", "t", "x", "y").with("nan", vec![(f64::NAN, 1.0)]).to_svg().is_none());
    }

    #[test]
    fn svg_is_deterministic_and_escaped() {
        let p = LinePlot::new("p", "a < b", "x", "y").with("s", vec![(0.0, 1.0), (1.0, 3.0)]).with("flat", vec![(0.5, 2.0)]);
        let a = p.to_svg().unwrap();
        assert_eq!(a, p.clone().to_svg().unwrap());
        assert!(a.contains("a &lt; b") && a.matches("<polyline").count() == 2);
        let single = LinePlot::new("q", "t", "x", "y").with("pt", vec![(2.0, 2.0)]).to_svg().unwrap();
        assert!(!single.contains("NaN"));
    }
}

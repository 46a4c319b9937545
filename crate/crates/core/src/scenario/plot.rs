//! Minimal SVG line and bar charts.

use std::fmt::Write;

const W: f64 = 900.0;
const H: f64 = 360.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 45.0;
const COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, mut y0: f64, mut y1: f64) -> Self {
        if !(y1 > y0) {
            y0 -= 1.0;
            y1 += 1.0;
        }
        let pad = 0.05 * (y1 - y0);
        Frame {
            x0,
            x1: if x1 > x0 { x1 } else { x0 + 1.0 },
            y0: y0 - pad,
            y1: y1 + pad,
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str, xlabel: &str, ylabel: &str, f: &Frame) {
    let _ = write!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{cx}" y="18" text-anchor="middle" font-size="14">{title}</text>
<text x="{cx}" y="{xl}" text-anchor="middle">{xlabel}</text>
<text x="14" y="{cy}" text-anchor="middle" transform="rotate(-90 14 {cy})">{ylabel}</text>
<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>
"##,
        cx = W / 2.0,
        cy = H / 2.0,
        xl = H - 8.0,
        pw = W - LEFT - RIGHT,
        ph = H - TOP - BOTTOM,
        title = escape(title),
        xlabel = escape(xlabel),
        ylabel = escape(ylabel),
    );
    for i in 0..=4 {
        let y = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let x = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r##"<text x="{}" y="{}" text-anchor="end">{}</text><text x="{}" y="{}" text-anchor="middle">{}</text>"##,
            LEFT - 4.0,
            f.py(y) + 4.0,
            tick(y),
            f.px(x),
            H - BOTTOM + 16.0,
            tick(x)
        );
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.1}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart of several series sharing an x axis.
pub fn lines(title: &str, xlabel: &str, ylabel: &str, x: &[f64], series: &[(&str, &[f64])]) -> String {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, s) in series {
        for &v in s.iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let f = Frame::new(
        x.first().copied().unwrap_or(0.0),
        x.last().copied().unwrap_or(1.0),
        lo,
        hi,
    );
    let mut out = String::new();
    header(&mut out, title, xlabel, ylabel, &f);
    for (i, (name, s)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = x
            .iter()
            .zip(s.iter())
            .filter(|(_, v)| v.is_finite())
            .map(|(&a, &b)| format!("{:.1},{:.1}", f.px(a), f.py(b)))
            .collect();
        let _ = writeln!(
            out,
            r##"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"##,
            pts.join(" ")
        );
        let ly = TOP + 14.0 + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"##,
            LEFT + 10.0,
            LEFT + 30.0,
            LEFT + 35.0,
            ly + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Bar chart of `(x, height)` pairs.
pub fn bars(title: &str, xlabel: &str, ylabel: &str, data: &[(f64, f64)]) -> String {
    let hi = data.iter().map(|d| d.1).fold(0.0, f64::max);
    let x0 = data.first().map_or(0.0, |d| d.0) - 1.0;
    let x1 = data.last().map_or(1.0, |d| d.0) + 1.0;
    let f = Frame::new(x0, x1, 0.0, if hi > 0.0 { hi } else { 1.0 });
    let mut out = String::new();
    header(&mut out, title, xlabel, ylabel, &f);
    let width = ((W - LEFT - RIGHT) / (data.len().max(1) as f64 * 1.5)).clamp(1.0, 30.0);
    for &(x, h) in data {
        let top = f.py(h);
        let _ = writeln!(
            out,
            r##"<rect x="{:.1}" y="{top:.1}" width="{width:.1}" height="{:.1}" fill="{}"/>"##,
            f.px(x) - width / 2.0,
            (f.py(0.0) - top).max(0.0),
            COLORS[0]
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_has_one_polyline_per_series() {
        let x = [0.0, 1.0, 2.0];
        let svg = lines("a<b", "k", "kW", &x, &[("r", &[0.0, 1.0, 0.5]), ("y", &[0.1, 0.9, 0.4])]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn degenerate_inputs_still_render() {
        let svg = lines("flat", "k", "kW", &[0.0], &[("c", &[3.0])]);
        assert!(!svg.contains("NaN"));
        let svg = bars("empty", "min", "count", &[]);
        assert!(!svg.contains("NaN"));
        let svg = bars("h", "min", "count", &[(2.0, 5.0), (4.0, 1.0)]);
        assert_eq!(svg.matches("<rect").count(), 4);
    }
}

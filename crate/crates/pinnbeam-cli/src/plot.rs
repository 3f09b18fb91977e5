//! Minimal SVG line plots: textual, dependency-free, and deterministic —
//! the same data always renders byte-identical markup.

use std::fmt::Write as _;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Stroke color (CSS); empty picks from the default palette.
    pub color: String,
    /// Draw circles at the data points instead of a connected line.
    pub scatter: bool,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Vertical marker lines (e.g. a training-window boundary).
    pub x_markers: Vec<(f64, String)>,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

const W: f64 = 900.0;
const H: f64 = 520.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 55.0;

fn fmt(v: f64) -> String {
    // Fixed short formatting keeps the SVG stable and compact.
    let s = format!("{v:.3}");
    s
}

/// Round-ish tick positions covering [lo, hi].
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let span = hi - lo;
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| span / s <= 7.0)
        .unwrap_or(mag * 10.0);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(t);
        t += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 1e4 || a < 1e-2 {
        format!("{v:.1e}")
    } else if a >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

impl Plot {
    pub fn render(&self) -> String {
        let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &(x, y) in &s.points {
                if x.is_finite() && y.is_finite() {
                    xmin = xmin.min(x);
                    xmax = xmax.max(x);
                    ymin = ymin.min(y);
                    ymax = ymax.max(y);
                }
            }
        }
        for &(x, _) in &self.x_markers {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
        }
        if !xmin.is_finite() {
            xmin = 0.0;
            xmax = 1.0;
            ymin = 0.0;
            ymax = 1.0;
        }
        if xmax == xmin {
            xmax = xmin + 1.0;
        }
        if ymax == ymin {
            ymax = ymin + 1.0;
        }
        let ypad = 0.05 * (ymax - ymin);
        ymin -= ypad;
        ymax += ypad;
        let pw = W - ML - MR;
        let ph = H - MT - MB;
        let sx = |x: f64| ML + (x - xmin) / (xmax - xmin) * pw;
        let sy = |y: f64| MT + (ymax - y) / (ymax - ymin) * ph;

        let mut svg = String::new();
        let _ = write!(
            svg,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
             font-family=\"sans-serif\" font-size=\"13\">\n"
        );
        let _ = write!(
            svg,
            "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
        );
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
            ML + pw / 2.0,
            esc(&self.title)
        );
        // Axes box and grid.
        for t in ticks(xmin, xmax) {
            let x = sx(t);
            let _ = write!(
                svg,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ddd\"/>\n",
                fmt(x),
                fmt(MT),
                fmt(x),
                fmt(MT + ph)
            );
            let _ = write!(
                svg,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                fmt(x),
                fmt(MT + ph + 18.0),
                tick_label(t)
            );
        }
        for t in ticks(ymin, ymax) {
            let y = sy(t);
            let _ = write!(
                svg,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ddd\"/>\n",
                fmt(ML),
                fmt(y),
                fmt(ML + pw),
                fmt(y)
            );
            let _ = write!(
                svg,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
                fmt(ML - 6.0),
                fmt(y + 4.0),
                tick_label(t)
            );
        }
        let _ = write!(
            svg,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n",
            fmt(ML),
            fmt(MT),
            fmt(pw),
            fmt(ph)
        );
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            ML + pw / 2.0,
            H - 12.0,
            esc(&self.x_label)
        );
        let _ = write!(
            svg,
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
            MT + ph / 2.0,
            MT + ph / 2.0,
            esc(&self.y_label)
        );
        // Vertical markers.
        for (xv, label) in &self.x_markers {
            let x = sx(*xv);
            let _ = write!(
                svg,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#888\" stroke-dasharray=\"6 4\"/>\n",
                fmt(x),
                fmt(MT),
                fmt(x),
                fmt(MT + ph)
            );
            let _ = write!(
                svg,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"#666\">{}</text>\n",
                fmt(x),
                fmt(MT - 6.0),
                esc(label)
            );
        }
        // Series.
        for (i, s) in self.series.iter().enumerate() {
            let color = if s.color.is_empty() {
                PALETTE[i % PALETTE.len()]
            } else {
                &s.color
            };
            if s.scatter {
                for &(x, y) in &s.points {
                    if x.is_finite() && y.is_finite() {
                        let _ = write!(
                            svg,
                            "<circle cx=\"{}\" cy=\"{}\" r=\"2.4\" fill=\"{color}\" fill-opacity=\"0.6\"/>\n",
                            fmt(sx(x)),
                            fmt(sy(y))
                        );
                    }
                }
            } else {
                let pts: Vec<String> = s
                    .points
                    .iter()
                    .filter(|(x, y)| x.is_finite() && y.is_finite())
                    .map(|&(x, y)| format!("{},{}", fmt(sx(x)), fmt(sy(y))))
                    .collect();
                let _ = write!(
                    svg,
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
                    pts.join(" ")
                );
            }
            // Legend entry.
            let ly = MT + 16.0 + 18.0 * i as f64;
            let _ = write!(
                svg,
                "<rect x=\"{}\" y=\"{}\" width=\"14\" height=\"4\" fill=\"{color}\"/>\n",
                fmt(ML + 10.0),
                fmt(ly - 4.0)
            );
            let _ = write!(
                svg,
                "<text x=\"{}\" y=\"{}\">{}</text>\n",
                fmt(ML + 30.0),
                fmt(ly),
                esc(&s.label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

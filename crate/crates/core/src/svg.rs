//! Minimal static line charts.

use std::fmt::Write as _;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 320.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 40.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series<'a> {
    pub label: String,
    pub values: &'a [f64],
    pub dashed: bool,
}

pub struct Chart<'a> {
    pub title: String,
    pub y_label: String,
    pub times: &'a [f64],
    pub series: Vec<Series<'a>>,
    /// Shaded time intervals, e.g. raised alarms.
    pub shaded: Vec<(f64, f64)>,
}

/// Evenly spaced ticks covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(t);
        t += step;
    }
    out
}

fn label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

impl Chart<'_> {
    pub fn render(&self) -> String {
        let t0 = self.times.first().copied().unwrap_or(0.0);
        let t1 = self.times.last().copied().unwrap_or(1.0).max(t0 + 1e-9);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for v in s.values.iter().filter(|v| v.is_finite()) {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-9 {
            lo -= 1.0;
            hi += 1.0;
        }
        let pad = 0.05 * (hi - lo);
        let (lo, hi) = (lo - pad, hi + pad);
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let x = |t: f64| MARGIN_L + (t - t0) / (t1 - t0) * pw;
        let y = |v: f64| MARGIN_T + (hi - v) / (hi - lo) * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for (a, b) in &self.shaded {
            let (xa, xb) = (x(a.max(t0)), x(b.min(t1)));
            if xb > xa {
                let _ = writeln!(
                    out,
                    r##"<rect x="{xa:.1}" y="{MARGIN_T}" width="{:.1}" height="{ph}" fill="#f4c7c3" opacity="0.6"/>"##,
                    xb - xa
                );
            }
        }
        for v in ticks(lo, hi) {
            let yy = y(v);
            let _ = writeln!(
                out,
                r##"<line x1="{MARGIN_L}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#e0e0e0"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                WIDTH - MARGIN_R,
                MARGIN_L - 5.0,
                yy + 4.0,
                label(v)
            );
        }
        for t in ticks(t0, t1) {
            let xx = x(t);
            let _ = writeln!(
                out,
                r##"<line x1="{xx:.1}" y1="{MARGIN_T}" x2="{xx:.1}" y2="{:.1}" stroke="#f0f0f0"/><text x="{xx:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                MARGIN_T + ph,
                HEIGHT - MARGIN_B + 15.0,
                label(t)
            );
        }
        let _ = writeln!(
            out,
            r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
        );
        // one point per horizontal pixel is plenty
        let stride = (self.times.len() as f64 / (2.0 * pw)).ceil().max(1.0) as usize;
        for (i, s) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let mut pts = String::new();
            for k in (0..self.times.len()).step_by(stride) {
                let v = s.values[k];
                if v.is_finite() {
                    let _ = write!(pts, "{:.1},{:.1} ", x(self.times[k]), y(v));
                }
            }
            let dash = if s.dashed { r#" stroke-dasharray="5,3""# } else { "" };
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.2"{dash} points="{}"/>"#,
                pts.trim_end()
            );
            let ly = MARGIN_T + 12.0 + 13.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                MARGIN_L + 8.0,
                ly - 4.0,
                MARGIN_L + 28.0,
                ly - 4.0,
                MARGIN_L + 32.0,
                ly,
                escape(&s.label)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">{}</text>"#,
            MARGIN_T + ph / 2.0,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">time (s)</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 6.0
        );
        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

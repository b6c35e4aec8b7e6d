//! Self-contained SVG plots: curves, a kernel density with a marker, and
//! boxplots.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Tick positions at a 1/2/5 step covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![lo];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|f| f * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    svg: String,
}

impl Frame {
    fn new(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
            HEIGHT - 10.0,
            escape(x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            TOP + (HEIGHT - TOP - BOTTOM) / 2.0,
            escape(y_label)
        );
        let mut frame = Self { x, y, svg };
        frame.axes();
        frame
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    fn axes(&mut self) {
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let _ = writeln!(
            self.svg,
            r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y1 - y0
        );
        for t in ticks(self.y.0, self.y.1) {
            let y = self.py(t);
            let _ = writeln!(
                self.svg,
                r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                x0 - 6.0,
                y + 4.0,
                label(t)
            );
        }
    }

    fn x_ticks(&mut self) {
        for t in ticks(self.x.0, self.x.1) {
            let x = self.px(t);
            let _ = writeln!(
                self.svg,
                r#"<line x1="{x:.2}" y1="{0}" x2="{x:.2}" y2="{1}" stroke="black"/><text x="{x:.2}" y="{2}" text-anchor="middle">{3}</text>"#,
                HEIGHT - BOTTOM,
                HEIGHT - BOTTOM + 5.0,
                HEIGHT - BOTTOM + 18.0,
                label(t)
            );
        }
    }

    fn polyline(&mut self, x: &[f64], y: &[f64], color: &str, dash: bool) {
        let points: Vec<String> = x
            .iter()
            .zip(y)
            .map(|(&a, &b)| format!("{:.2},{:.2}", self.px(a), self.py(b)))
            .collect();
        let dash = if dash { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            self.svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            points.join(" ")
        );
    }

    fn legend(&mut self, names: &[&str]) {
        for (i, name) in names.iter().enumerate() {
            let y = TOP + 14.0 + 16.0 * i as f64;
            let x = WIDTH - RIGHT - 120.0;
            let _ = writeln!(
                self.svg,
                r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                x + 20.0,
                PALETTE[i % PALETTE.len()],
                x + 26.0,
                y + 4.0,
                escape(name)
            );
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Curves sharing the abscissae `x`; the first series is drawn solid, the
/// rest dashed.
pub fn curves(title: &str, x: &[f64], series: &[(&str, &[f64])]) -> String {
    let (lo, hi) = range(series.iter().flat_map(|(_, y)| y.iter().copied()));
    let (xlo, xhi) = range(x.iter().copied());
    let mut f = Frame::new(title, "t", "", (xlo, xhi), padded(lo, hi));
    f.x_ticks();
    for (i, (_, y)) in series.iter().enumerate() {
        f.polyline(x, y, PALETTE[i % PALETTE.len()], i > 0);
    }
    if series.len() > 1 {
        f.legend(&series.iter().map(|(n, _)| *n).collect::<Vec<_>>());
    }
    f.finish()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    s.sort_by(f64::total_cmp);
    s
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^{-1/5}`.
pub fn silverman_bandwidth(v: &[f64]) -> f64 {
    let s = sorted(v);
    if s.len() < 2 {
        return 1.0;
    }
    let (_, sd) = mean_sd(&s);
    let iqr = quantile(&s, 0.75) - quantile(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (s.len() as f64).powf(-0.2);
    if h > 0.0 { h } else { 1.0 }
}

/// Gaussian kernel density of `samples` with a vertical marker at `marker`.
pub fn density(title: &str, x_label: &str, samples: &[f64], marker: f64) -> String {
    let h = silverman_bandwidth(samples);
    let (lo, hi) = range(samples.iter().copied().chain([marker]));
    let (lo, hi) = (lo - 3.0 * h, hi + 3.0 * h);
    let n = samples.len().max(1) as f64;
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    let xs: Vec<f64> = (0..256).map(|i| lo + (hi - lo) * i as f64 / 255.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| norm * samples.iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>())
        .collect();
    let top = ys.iter().copied().fold(0.0, f64::max);
    let mut f = Frame::new(title, x_label, "density", (lo, hi), (0.0, 1.05 * top.max(1e-300)));
    f.x_ticks();
    f.polyline(&xs, &ys, PALETTE[0], false);
    f.polyline(&[marker, marker], &[0.0, 1.05 * top], PALETTE[1], true);
    f.finish()
}

/// One box per group: quartiles, whiskers to the furthest point within 1.5
/// IQR, points beyond drawn individually.
pub fn boxplot(title: &str, y_label: &str, groups: &[(String, Vec<f64>)]) -> String {
    let (lo, hi) = range(groups.iter().flat_map(|(_, v)| v.iter().copied()));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let count = groups.len().max(1) as f64;
    let mut f = Frame::new(title, "", y_label, (0.0, count), padded(lo, hi));
    let slot = (WIDTH - LEFT - RIGHT) / count;
    for (g, (name, values)) in groups.iter().enumerate() {
        let cx = f.px(g as f64 + 0.5);
        let _ = writeln!(
            f.svg,
            r#"<text x="{cx:.2}" y="{}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM + 18.0,
            escape(name)
        );
        let s = sorted(values);
        if s.is_empty() {
            continue;
        }
        let (q1, q2, q3) = (quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75));
        let fence = 1.5 * (q3 - q1);
        let low = s.iter().copied().find(|&v| v >= q1 - fence).unwrap_or(q1);
        let high = s.iter().rev().copied().find(|&v| v <= q3 + fence).unwrap_or(q3);
        let half = 0.3 * slot;
        let color = PALETTE[g % PALETTE.len()];
        let (y1, y2, y3) = (f.py(q1), f.py(q2), f.py(q3));
        let (yl, yh) = (f.py(low), f.py(high));
        let _ = writeln!(
            f.svg,
            r#"<line x1="{cx:.2}" y1="{yl:.2}" x2="{cx:.2}" y2="{y1:.2}" stroke="black"/><line x1="{cx:.2}" y1="{y3:.2}" x2="{cx:.2}" y2="{yh:.2}" stroke="black"/>"#
        );
        let _ = writeln!(
            f.svg,
            r#"<rect x="{:.2}" y="{y3:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.35" stroke="black"/><line x1="{:.2}" y1="{y2:.2}" x2="{:.2}" y2="{y2:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            2.0 * half,
            (y1 - y3).max(0.0),
            cx - half,
            cx + half
        );
        for &v in s.iter().filter(|&&v| v < low || v > high) {
            let _ = writeln!(f.svg, r#"<circle cx="{cx:.2}" cy="{:.2}" r="2" fill="none" stroke="black"/>"#, f.py(v));
        }
    }
    f.finish()
}

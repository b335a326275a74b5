//! Minimal static SVG charts: line charts with linear or log axes, and boxplots.

use std::fmt::Write as _;

use vslam_core::sim::BoxStats;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub fn color(index: usize) -> &'static str {
    PALETTE[index % PALETTE.len()]
}

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub dashed: bool,
}

#[derive(Clone, Copy, Debug)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = values
            .filter(|v| v.is_finite() && (!log || *v > 0.0))
            .map(|v| if log { v.log10() } else { v })
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if log {
            (lo, hi) = (lo.floor(), hi.ceil());
        }
        if hi - lo < 1e-12 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        Self { lo, hi, log }
    }

    /// Position in [0, 1], or `None` for values a log axis cannot show.
    fn unit(&self, v: f64) -> Option<f64> {
        let v = if self.log {
            if v <= 0.0 {
                return None;
            }
            v.log10()
        } else {
            v
        };
        v.is_finite().then(|| (v - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let step = ((self.hi - self.lo) / 8.0).ceil().max(1.0);
            let mut out = Vec::new();
            let mut e = self.lo;
            while e <= self.hi + 1e-9 {
                out.push(((e - self.lo) / (self.hi - self.lo), format!("1e{}", e as i64)));
                e += step;
            }
            return out;
        }
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(raw);
        let mut out = Vec::new();
        let mut v = (self.lo / step).ceil() * step;
        while v <= self.hi + step * 1e-9 {
            out.push(((v - self.lo) / (self.hi - self.lo), format_tick(v)));
            v += step;
        }
        out
    }
}

fn format_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn px(ux: f64) -> f64 {
    LEFT + ux * (WIDTH - LEFT - RIGHT)
}

fn py(uy: f64) -> f64 {
    HEIGHT - BOTTOM - uy * (HEIGHT - TOP - BOTTOM)
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(body, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            body,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        Self { body }
    }

    fn frame(&mut self, x_label: &str, y_label: &str, x_ticks: &[(f64, String)], y_ticks: &[(f64, String)]) {
        let (x0, x1, y0, y1) = (px(0.0), px(1.0), py(0.0), py(1.0));
        let _ = writeln!(
            self.body,
            r#"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        for (u, label) in x_ticks {
            let x = px(*u);
            let _ = writeln!(
                self.body,
                r##"<line x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                y0 + 5.0,
                y0 + 20.0,
                escape(label)
            );
        }
        for (u, label) in y_ticks {
            let y = py(*u);
            let _ = writeln!(
                self.body,
                r##"<line x1="{x0:.1}" y1="{y:.1}" x2="{x1:.1}" y2="{y:.1}" stroke="#e0e0e0"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                x0 - 6.0,
                y + 4.0,
                escape(label)
            );
        }
        let _ = writeln!(
            self.body,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 15.0,
            escape(x_label)
        );
        let _ = writeln!(
            self.body,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }

    fn notes(&mut self, lines: &[String]) {
        for (k, line) in lines.iter().enumerate() {
            let _ = writeln!(
                self.body,
                r#"<text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
                px(0.0) + 8.0,
                py(1.0) + 16.0 + 14.0 * k as f64,
                escape(line)
            );
        }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

#[derive(Clone, Debug)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
    /// Free text drawn in the top-left corner, one entry per line.
    pub notes: Vec<String>,
    pub legend: bool,
}

impl LineChart {
    pub fn render(&self) -> String {
        let points = || self.series.iter().flat_map(|s| s.points.iter());
        let xa = Axis::fit(points().map(|p| p.0), false);
        let ya = Axis::fit(points().map(|p| p.1), self.log_y);
        let mut canvas = Canvas::new(&self.title);
        canvas.frame(&self.x_label, &self.y_label, &xa.ticks(), &ya.ticks());

        for s in &self.series {
            // Break the polyline wherever a point cannot be drawn.
            let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
            for &(x, y) in &s.points {
                match (xa.unit(x), ya.unit(y)) {
                    (Some(ux), Some(uy)) => runs.last_mut().unwrap().push((px(ux), py(uy))),
                    _ => runs.push(Vec::new()),
                }
            }
            for run in runs.iter().filter(|r| !r.is_empty()) {
                let coords: Vec<String> = run.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
                let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
                let _ = writeln!(
                    canvas.body,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                    s.color,
                    coords.join(" ")
                );
                if run.len() == 1 || s.points.len() <= 12 {
                    for (x, y) in run {
                        let _ = writeln!(
                            canvas.body,
                            r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{}"/>"#,
                            s.color
                        );
                    }
                }
            }
        }

        if self.legend {
            let x = px(1.0) - 150.0;
            for (k, s) in self.series.iter().enumerate() {
                let y = py(1.0) + 16.0 + 14.0 * k as f64;
                let _ = writeln!(
                    canvas.body,
                    r#"<line x1="{x:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{y:.1}" font-size="11">{}</text>"#,
                    y - 4.0,
                    x + 18.0,
                    y - 4.0,
                    s.color,
                    x + 24.0,
                    escape(&s.name)
                );
            }
        }
        canvas.notes(&self.notes);
        canvas.finish()
    }
}

#[derive(Clone, Debug)]
pub struct BoxGroup {
    pub name: String,
    pub stats: BoxStats,
    pub color: &'static str,
}

#[derive(Clone, Debug)]
pub struct BoxPlot {
    pub title: String,
    pub y_label: String,
    pub log_y: bool,
    pub groups: Vec<BoxGroup>,
    pub notes: Vec<String>,
}

impl BoxPlot {
    pub fn render(&self) -> String {
        let values = self.groups.iter().flat_map(|g| {
            [g.stats.whisker_low, g.stats.whisker_high]
                .into_iter()
                .chain(g.stats.outliers.iter().copied())
        });
        let ya = Axis::fit(values, self.log_y);
        let mut canvas = Canvas::new(&self.title);
        let n = self.groups.len().max(1) as f64;
        let x_ticks: Vec<(f64, String)> = self
            .groups
            .iter()
            .enumerate()
            .map(|(k, g)| ((k as f64 + 0.5) / n, g.name.clone()))
            .collect();
        canvas.frame("", &self.y_label, &x_ticks, &ya.ticks());

        let half = 0.18 * (px(1.0) - px(0.0)) / n;
        for (k, g) in self.groups.iter().enumerate() {
            let cx = px((k as f64 + 0.5) / n);
            let y = |v: f64| ya.unit(v).map(py);
            let s = &g.stats;
            let (Some(q1), Some(q3), Some(med), Some(lo), Some(hi)) =
                (y(s.q1), y(s.q3), y(s.median), y(s.whisker_low), y(s.whisker_high))
            else {
                continue;
            };
            let c = g.color;
            let _ = writeln!(
                canvas.body,
                r#"<line x1="{cx:.1}" y1="{hi:.1}" x2="{cx:.1}" y2="{q3:.1}" stroke="{c}"/><line x1="{cx:.1}" y1="{q1:.1}" x2="{cx:.1}" y2="{lo:.1}" stroke="{c}"/>"#
            );
            for w in [lo, hi] {
                let _ = writeln!(
                    canvas.body,
                    r#"<line x1="{:.1}" y1="{w:.1}" x2="{:.1}" y2="{w:.1}" stroke="{c}"/>"#,
                    cx - half / 2.0,
                    cx + half / 2.0
                );
            }
            let _ = writeln!(
                canvas.body,
                r#"<rect x="{:.1}" y="{q3:.1}" width="{:.1}" height="{:.1}" fill="{c}" fill-opacity="0.25" stroke="{c}"/>"#,
                cx - half,
                2.0 * half,
                (q1 - q3).max(0.5)
            );
            let _ = writeln!(
                canvas.body,
                r#"<line x1="{:.1}" y1="{med:.1}" x2="{:.1}" y2="{med:.1}" stroke="{c}" stroke-width="2.5"/>"#,
                cx - half,
                cx + half
            );
            for o in s.outliers.iter().filter_map(|&v| y(v)) {
                let _ = writeln!(
                    canvas.body,
                    r#"<circle cx="{cx:.1}" cy="{o:.1}" r="3.5" fill="none" stroke="{c}"/>"#
                );
            }
        }
        canvas.notes(&self.notes);
        canvas.finish()
    }
}

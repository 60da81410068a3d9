//! Self-contained SVG line charts of episode traces against arc length.

use std::fmt::Write as _;

use slas_core::sim::{headway, EpisodeLog};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 120.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 48.0;
const COLOURS: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub x_ticks: Vec<f64>,
    pub y_ticks: Vec<f64>,
    /// Dashed horizontal reference lines.
    pub guides: Vec<f64>,
    pub series: Vec<Series>,
}

fn ticks(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

/// Step between ticks giving at most about eight intervals.
fn nice_step(span: f64) -> f64 {
    let raw = span / 8.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

impl Chart {
    fn px(&self, x: f64) -> f64 {
        let (a, b) = self.x_range;
        MARGIN_L + (x - a) / (b - a) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        let (a, b) = self.y_range;
        HEIGHT - MARGIN_B - (y - a) / (b - a) * (HEIGHT - MARGIN_T - MARGIN_B)
    }

    pub fn to_svg(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, esc(&self.title));
        let (x0, x1) = (self.px(self.x_range.0), self.px(self.x_range.1));
        let (y0, y1) = (self.py(self.y_range.0), self.py(self.y_range.1));
        for &t in &self.x_ticks {
            let x = self.px(t);
            let _ = writeln!(s, r##"<line x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{y1:.1}" stroke="#e5e5e5"/>"##);
            let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, y0 + 16.0, fmt_tick(t));
        }
        for &t in &self.y_ticks {
            let y = self.py(t);
            let _ = writeln!(s, r##"<line x1="{x0:.1}" y1="{y:.1}" x2="{x1:.1}" y2="{y:.1}" stroke="#e5e5e5"/>"##);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 6.0, y + 4.0, fmt_tick(t));
        }
        for &g in &self.guides {
            let y = self.py(g);
            let _ = writeln!(
                s,
                r##"<line x1="{x0:.1}" y1="{y:.1}" x2="{x1:.1}" y2="{y:.1}" stroke="#888" stroke-dasharray="6 4"/>"##
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 10.0, esc(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            esc(&self.y_label)
        );
        let _ = writeln!(s, r#"<clipPath id="plot"><rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}"/></clipPath>"#, x1 - x0, y0 - y1);
        for (i, series) in self.series.iter().enumerate() {
            let colour = COLOURS[i % COLOURS.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline clip-path="url(#plot)" fill="none" stroke="{colour}" stroke-width="1.8" points="{}"/>"#,
                pts.join(" ")
            );
            let ly = y1 + 16.0 + 18.0 * i as f64;
            let _ = writeln!(s, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/>"#, x1 + 10.0, x1 + 30.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x1 + 36.0, ly + 4.0, esc(&series.label));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn fmt_tick(t: f64) -> String {
    if (t - t.round()).abs() < 1e-9 {
        format!("{}", t.round())
    } else {
        format!("{t:.1}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn x_axis(logs: &[&EpisodeLog]) -> ((f64, f64), Vec<f64>) {
    let length = logs.first().map_or(350.0, |l| l.road.length);
    let step = nice_step(length);
    ((0.0, length), ticks(0.0, length, step))
}

fn label(log: &EpisodeLog) -> String {
    log.policy.name().to_string()
}

/// Elapsed time against arc length.
pub fn travel_time(logs: &[&EpisodeLog]) -> Chart {
    let (x_range, x_ticks) = x_axis(logs);
    let t_max = logs.iter().filter_map(|l| l.samples.last()).map(|s| s.time).fold(10.0, f64::max);
    let step = nice_step(t_max);
    let top = (t_max / step).ceil() * step;
    Chart {
        title: "Travel time".into(),
        x_label: "longitudinal displacement s [m]".into(),
        y_label: "time [s]".into(),
        x_range,
        y_range: (0.0, top),
        x_ticks,
        y_ticks: ticks(0.0, top, step),
        guides: Vec::new(),
        series: logs
            .iter()
            .map(|l| Series {
                label: label(l),
                points: l.samples.iter().map(|s| (s.ego_s, s.time)).collect(),
            })
            .collect(),
    }
}

/// Lateral offset against arc length, with the lane centres drawn.
pub fn lateral(logs: &[&EpisodeLog]) -> Chart {
    let (x_range, x_ticks) = x_axis(logs);
    let (lanes, width) = logs.first().map_or((3, 3.5), |l| (l.road.max_lanes(), l.road.lane_width));
    let centres: Vec<f64> = (0..lanes).map(|i| i as f64 * width).collect();
    Chart {
        title: "Lateral displacement".into(),
        x_label: "longitudinal displacement s [m]".into(),
        y_label: "lateral offset [m]".into(),
        x_range,
        y_range: (-width / 2.0, (lanes as f64 - 0.5) * width),
        x_ticks,
        y_ticks: centres.clone(),
        guides: centres,
        series: logs
            .iter()
            .map(|l| Series {
                label: label(l),
                points: l.samples.iter().map(|s| (s.ego_s, s.ego_lateral)).collect(),
            })
            .collect(),
    }
}

/// Headway to the same-lane leader against arc length, capped at the
/// sensor range.
pub fn headway_chart(logs: &[&EpisodeLog]) -> Chart {
    let (x_range, x_ticks) = x_axis(logs);
    let range = logs.first().map_or(50.0, |l| l.visibility);
    let step = nice_step(range);
    Chart {
        title: "Headway".into(),
        x_label: "longitudinal displacement s [m]".into(),
        y_label: "headway [m]".into(),
        x_range,
        y_range: (0.0, range),
        x_ticks,
        y_ticks: ticks(0.0, range, step),
        guides: Vec::new(),
        series: logs
            .iter()
            .map(|l| Series {
                label: label(l),
                points: l.samples.iter().map(|s| (s.ego_s, headway(s, range))).collect(),
            })
            .collect(),
    }
}

/// File stem and chart for each of the three panels.
pub fn all_charts(logs: &[&EpisodeLog]) -> [(&'static str, Chart); 3] {
    [
        ("travel_time", travel_time(logs)),
        ("lateral", lateral(logs)),
        ("headway", headway_chart(logs)),
    ]
}

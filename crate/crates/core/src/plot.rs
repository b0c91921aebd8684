//! Minimal SVG charts over the evaluation CSVs.
//!
//! All charts use an 800x600 viewBox with a 70 px left/bottom margin and a
//! 30 px top/right margin. Axes start at zero and end at the largest plotted
//! value times 1.05 (or 1 when every value is zero). Numbers are printed
//! with two decimals so output bytes depend only on the input records.

use std::fmt::Write as _;

use crate::experiments::{policy_names, ConvergencePoint, RunRecord};
use crate::stats;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 70.0;
const BOTTOM: f64 = 70.0;
const TOP: f64 = 30.0;
const RIGHT: f64 = 30.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Which run measurement a scatter plot compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Iterations,
    Time,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::Iterations => "iterations",
            Metric::Time => "time",
        }
    }

    fn of(self, r: &RunRecord) -> f64 {
        match self {
            Metric::Iterations => r.iterations as f64,
            Metric::Time => r.wall_time_seconds,
        }
    }
}

fn axis_max(values: impl Iterator<Item = f64>) -> f64 {
    let m = values.fold(0.0f64, f64::max);
    if m > 0.0 {
        m * 1.05
    } else {
        1.0
    }
}

struct Frame {
    x_max: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        LEFT + v / self.x_max * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - v / self.y_max * (HEIGHT - BOTTOM - TOP)
    }
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="16">{}</text>"#, WIDTH / 2.0, escape(title));
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (x0, y0) = (f.x(0.0), f.y(0.0));
    let _ = writeln!(out, r#"<line class="axis" x1="{x0:.2}" y1="{y0:.2}" x2="{:.2}" y2="{y0:.2}" stroke="black"/>"#, f.x(f.x_max));
    let _ = writeln!(out, r#"<line class="axis" x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{:.2}" stroke="black"/>"#, f.y(f.y_max));
    for i in 0..=4 {
        let v = f.x_max * i as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{v:.2}</text>"#, f.x(v), y0 + 16.0);
        let v = f.y_max * i as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{v:.2}</text>"#, x0 - 6.0, f.y(v) + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, HEIGHT - 20.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="20" y="{:.2}" text-anchor="middle" font-size="13" transform="rotate(-90 20 {:.2})">{}</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        escape(y_label)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One point per instance run by both policies, plus the `y = x` diagonal.
pub fn scatter_svg(records: &[RunRecord], x_policy: &str, y_policy: &str, metric: Metric) -> String {
    let pairs: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.policy == x_policy)
        .filter_map(|a| {
            records
                .iter()
                .find(|b| b.policy == y_policy && b.instance_name == a.instance_name)
                .map(|b| (metric.of(a), metric.of(b)))
        })
        .collect();
    let m = axis_max(pairs.iter().flat_map(|&(a, b)| [a, b]));
    let f = Frame { x_max: m, y_max: m };
    let mut out = String::new();
    open(&mut out, &format!("{y_policy} vs {x_policy}: {}", metric.label()));
    axes(&mut out, &f, &format!("{x_policy} {}", metric.label()), &format!("{y_policy} {}", metric.label()));
    let _ = writeln!(
        out,
        r#"<line class="diagonal" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
        f.x(0.0),
        f.y(0.0),
        f.x(m),
        f.y(m)
    );
    for (a, b) in pairs {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}" fill-opacity="0.7"/>"#, f.x(a), f.y(b), PALETTE[0]);
    }
    out.push_str("</svg>\n");
    out
}

/// Box-and-whisker of iterations per policy (whiskers at min and max).
pub fn box_svg(records: &[RunRecord]) -> String {
    let names = policy_names(records);
    let groups: Vec<Vec<f64>> = names
        .iter()
        .map(|p| records.iter().filter(|r| &r.policy == p).map(|r| r.iterations as f64).collect())
        .collect();
    let f = Frame { x_max: names.len().max(1) as f64, y_max: axis_max(groups.iter().flatten().copied()) };
    let mut out = String::new();
    open(&mut out, "iterations per policy");
    axes(&mut out, &f, "policy", "iterations");
    for (i, (name, g)) in names.iter().zip(&groups).enumerate() {
        let [lo, q1, med, q3, hi] = stats::five_numbers(g);
        let cx = f.x(i as f64 + 0.5);
        let half = 0.25 * (f.x(1.0) - f.x(0.0));
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(out, r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#, f.y(lo), f.y(hi));
        let _ = writeln!(
            out,
            r#"<rect class="box" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.5" stroke="black"/>"#,
            cx - half,
            f.y(q3),
            2.0 * half,
            f.y(q1) - f.y(q3)
        );
        let _ = writeln!(out, r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#, cx - half, f.y(med), cx + half, f.y(med));
        let _ = writeln!(out, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#, HEIGHT - BOTTOM + 32.0, escape(name));
    }
    out.push_str("</svg>\n");
    out
}

/// Mean normalized objective per iteration with a shaded one-sigma band.
pub fn convergence_svg(points: &[ConvergencePoint]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for p in points {
        if !names.contains(&p.policy.as_str()) {
            names.push(&p.policy);
        }
    }
    let f = Frame {
        x_max: axis_max(points.iter().map(|p| p.iteration as f64)),
        y_max: axis_max(points.iter().map(|p| p.mean + p.std)),
    };
    let mut out = String::new();
    open(&mut out, "normalized objective");
    axes(&mut out, &f, "iteration", "normalized objective");
    for (i, name) in names.iter().enumerate() {
        let series: Vec<&ConvergencePoint> = points.iter().filter(|p| p.policy == *name).collect();
        let color = PALETTE[i % PALETTE.len()];
        let mut band = String::new();
        for p in &series {
            let _ = write!(band, "{:.2},{:.2} ", f.x(p.iteration as f64), f.y(p.mean + p.std));
        }
        for p in series.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", f.x(p.iteration as f64), f.y((p.mean - p.std).max(0.0)));
        }
        let _ = writeln!(out, r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2"/>"#, band.trim_end());
        let line: Vec<String> =
            series.iter().map(|p| format!("{:.2},{:.2}", f.x(p.iteration as f64), f.y(p.mean))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{color}">{}</text>"#,
            WIDTH - RIGHT - 120.0,
            TOP + 20.0 + 16.0 * i as f64,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

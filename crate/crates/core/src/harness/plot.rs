//! Reward/cost curve rendering as self-contained SVG text. One thin line
//! per seed, one bold line per mode mean, fixed palette keyed by mode.

use super::runlog::RunLog;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 18.0;
const MARGIN_T: f64 = 26.0;
const MARGIN_B: f64 = 46.0;

const MODE_ORDER: [&str; 5] = ["none", "cbf", "dob_cbf", "res_cbf", "res_dob_cbf"];

fn mode_color(mode: &str) -> &'static str {
    match mode {
        "none" => "#8c564b",
        "cbf" => "#d62728",
        "dob_cbf" => "#1f77b4",
        "res_cbf" => "#e6a400",
        "res_dob_cbf" => "#2ca02c",
        _ => "#555555",
    }
}

/// Which per-iteration metric to plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Reward,
    Cost,
}

impl Metric {
    fn label(self) -> &'static str {
        match self {
            Metric::Reward => "Mean episode reward",
            Metric::Cost => "Mean episode cost",
        }
    }

    fn pick(self, r: &super::runlog::IterRecord) -> f64 {
        match self {
            Metric::Reward => r.mean_episode_reward,
            Metric::Cost => r.mean_episode_cost,
        }
    }
}

struct Axes {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Axes {
    fn x(&self, v: f64) -> f64 {
        let w = WIDTH - MARGIN_L - MARGIN_R;
        MARGIN_L + (v - self.x_min) / (self.x_max - self.x_min).max(1e-12) * w
    }

    fn y(&self, v: f64) -> f64 {
        let h = HEIGHT - MARGIN_T - MARGIN_B;
        // flipped: larger values sit higher on the canvas
        MARGIN_T + (self.y_max - v) / (self.y_max - self.y_min).max(1e-12) * h
    }
}

fn fmt(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn polyline(points: &[(f64, f64)], color: &str, width: f64, opacity: f64) -> String {
    let coords: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" stroke-opacity=\"{opacity}\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

/// Render one metric across runs. Logs are grouped by the mode their flag
/// set resolves to; each group gets per-seed thin lines and a bold mean.
pub fn render_metric(logs: &[RunLog], metric: Metric) -> String {
    assert!(!logs.is_empty(), "need at least one log");
    let mut groups: Vec<(&'static str, Vec<&RunLog>)> = Vec::new();
    for &mode in MODE_ORDER.iter() {
        let members: Vec<&RunLog> =
            logs.iter().filter(|l| l.meta.flags.mode_name() == mode).collect();
        if !members.is_empty() {
            groups.push((mode, members));
        }
    }

    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    let mut x_max: f64 = 1.0;
    for log in logs {
        for r in &log.records {
            let v = metric.pick(r);
            y_min = y_min.min(v);
            y_max = y_max.max(v);
            x_max = x_max.max(r.iteration as f64);
        }
    }
    if !y_min.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    let axes = Axes { x_min: 1.0, x_max, y_min: y_min - pad, y_max: y_max + pad };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // axes
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\" stroke-width=\"1\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\" stroke-width=\"1\"/>\n"
    ));

    // ticks
    for k in 0..=4 {
        let fx = axes.x_min + (axes.x_max - axes.x_min) * k as f64 / 4.0;
        let px = axes.x(fx);
        svg.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{y0}\" x2=\"{px:.2}\" y2=\"{}\" stroke=\"black\"/>\n",
            y0 + 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.2}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            y0 + 17.0,
            fmt(fx)
        ));
        let fy = axes.y_min + (axes.y_max - axes.y_min) * k as f64 / 4.0;
        let py = axes.y(fy);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py:.2}\" x2=\"{x0}\" y2=\"{py:.2}\" stroke=\"black\"/>\n",
            x0 - 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            x0 - 7.0,
            py + 3.5,
            fmt(fy)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">Iteration</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        metric.label()
    ));

    for (mode, members) in &groups {
        let color = mode_color(mode);
        let len = members.iter().map(|l| l.records.len()).max().unwrap_or(0);
        // per-seed thin lines
        for log in members {
            let pts: Vec<(f64, f64)> = log
                .records
                .iter()
                .map(|r| (axes.x(r.iteration as f64), axes.y(metric.pick(r))))
                .collect();
            if pts.len() == 1 {
                svg.push_str(&format!(
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                    pts[0].0, pts[0].1
                ));
            }
            svg.push_str(&polyline(&pts, color, 1.0, 0.35));
        }
        // mean line across seeds
        let mut mean_pts = Vec::new();
        for i in 0..len {
            let vals: Vec<f64> = members
                .iter()
                .filter_map(|l| l.records.get(i))
                .map(|r| metric.pick(r))
                .collect();
            if vals.is_empty() {
                continue;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            mean_pts.push((axes.x((i + 1) as f64), axes.y(mean)));
        }
        svg.push_str(&polyline(&mean_pts, color, 2.2, 1.0));
    }

    // legend
    let mut ly = MARGIN_T + 8.0;
    for (mode, _) in &groups {
        let color = mode_color(mode);
        let lx = WIDTH - MARGIN_R - 150.0;
        svg.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{ly:.2}\" x2=\"{}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2.5\"/>\n",
            lx + 24.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" font-size=\"12\">{mode}</text>\n",
            lx + 30.0,
            ly + 4.0
        ));
        ly += 17.0;
    }

    svg.push_str("</svg>\n");
    svg
}

/// Render reward and cost plots for a set of run logs.
pub fn render_plots(logs: &[RunLog]) -> (String, String) {
    (render_metric(logs, Metric::Reward), render_metric(logs, Metric::Cost))
}

//! Standalone SVG plots for a config-level run directory: per-step action
//! change with an inter-seed band, raw action traces, and amplitude spectra.
//! The SVG is hand-assembled (no plotting dependency) but well-formed XML.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use smoothrl::env::build_dynamics;
use smoothrl::metrics::{dft_magnitudes, ActionTrace};

use crate::config::ExperimentConfig;
use crate::runner::{atomic_write, parse_traces_csv};

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Per-step mean-over-episodes L2 norm of the action change `a_t - a_{t-1}`
/// for one seed's traces; index 0 corresponds to step 1. Episodes are
/// truncated to their common length.
pub fn delta_series(traces: &[ActionTrace]) -> Vec<f64> {
    let steps = traces.iter().map(|t| t.actions.len()).min().unwrap_or(0);
    if steps < 2 {
        return Vec::new();
    }
    (1..steps)
        .map(|t| {
            let total: f64 = traces
                .iter()
                .map(|trace| {
                    let prev = &trace.actions[t - 1];
                    let cur = &trace.actions[t];
                    cur.iter()
                        .zip(prev)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum();
            total / traces.len() as f64
        })
        .collect()
}

/// Pointwise median / min / max across several equally-meaningful series,
/// truncated to the shortest length. Median of an even count is the mean of
/// the two central order statistics.
pub fn median_band(series: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let mut median = Vec::with_capacity(len);
    let mut lo = Vec::with_capacity(len);
    let mut hi = Vec::with_capacity(len);
    for i in 0..len {
        let mut vals: Vec<f64> = series.iter().map(|s| s[i]).collect();
        vals.sort_by(f64::total_cmp);
        let n = vals.len();
        let m = if n % 2 == 1 { vals[n / 2] } else { (vals[n / 2 - 1] + vals[n / 2]) / 2.0 };
        median.push(m);
        lo.push(vals[0]);
        hi.push(vals[n - 1]);
    }
    (median, lo, hi)
}

fn svg_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.1e}");
    }
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

/// A single-axes line figure accumulated as SVG body fragments.
struct Figure {
    width: f64,
    height: f64,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    title: String,
    x_label: String,
    y_label: String,
    body: String,
}

impl Figure {
    fn new(title: &str, x_label: &str, y_label: &str, xs: &[f64], ys: &[f64]) -> Figure {
        let (mut x_min, mut x_max) = bounds(xs);
        let (mut y_min, mut y_max) = bounds(ys);
        // Degenerate ranges still need a drawable span.
        if x_max - x_min < 1e-12 {
            x_min -= 0.5;
            x_max += 0.5;
        }
        if y_max - y_min < 1e-12 {
            y_min -= 1.0;
            y_max += 1.0;
        } else {
            let pad = (y_max - y_min) * 0.05;
            y_min -= pad;
            y_max += pad;
        }
        Figure {
            width: 800.0,
            height: 480.0,
            left: 70.0,
            right: 20.0,
            top: 40.0,
            bottom: 50.0,
            x_min,
            x_max,
            y_min,
            y_max,
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            body: String::new(),
        }
    }

    fn map_x(&self, x: f64) -> f64 {
        let frac = (x - self.x_min) / (self.x_max - self.x_min);
        self.left + frac * (self.width - self.left - self.right)
    }

    fn map_y(&self, y: f64) -> f64 {
        let frac = (y - self.y_min) / (self.y_max - self.y_min);
        self.height - self.bottom - frac * (self.height - self.top - self.bottom)
    }

    fn points_attr(&self, xs: &[f64], ys: &[f64]) -> String {
        xs.iter()
            .zip(ys)
            .map(|(x, y)| format!("{:.2},{:.2}", self.map_x(*x), self.map_y(*y)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn polyline(&mut self, xs: &[f64], ys: &[f64], color: &str, width: f64) {
        self.body.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" points=\"{}\"/>\n",
            self.points_attr(xs, ys)
        ));
    }

    /// Filled region between `lower` and `upper` over the same xs.
    fn band(&mut self, xs: &[f64], lower: &[f64], upper: &[f64], color: &str) {
        let mut pts = self.points_attr(xs, upper);
        let back_x: Vec<f64> = xs.iter().rev().copied().collect();
        let back_y: Vec<f64> = lower.iter().rev().copied().collect();
        pts.push(' ');
        pts.push_str(&self.points_attr(&back_x, &back_y));
        self.body.push_str(&format!(
            "  <polygon fill=\"{color}\" fill-opacity=\"0.25\" stroke=\"none\" points=\"{pts}\"/>\n"
        ));
    }

    fn legend(&mut self, entries: &[(String, String)]) {
        for (i, (label, color)) in entries.iter().enumerate() {
            let y = self.top + 6.0 + 16.0 * i as f64;
            let x = self.width - self.right - 150.0;
            self.body.push_str(&format!(
                "  <line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                x + 22.0
            ));
            self.body.push_str(&format!(
                "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"#333\">{}</text>\n",
                x + 28.0,
                y + 4.0,
                svg_escape(label)
            ));
        }
    }

    fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            w = self.width,
            h = self.height
        ));
        out.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        out.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\" fill=\"#111\">{}</text>\n",
            self.width / 2.0,
            svg_escape(&self.title)
        ));

        let x0 = self.left;
        let x1 = self.width - self.right;
        let y0 = self.height - self.bottom;
        let y1 = self.top;
        out.push_str(&format!(
            "  <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"#444\" stroke-width=\"1\"/>\n"
        ));
        out.push_str(&format!(
            "  <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"#444\" stroke-width=\"1\"/>\n"
        ));
        for k in 0..=4 {
            let fx = self.x_min + (self.x_max - self.x_min) * k as f64 / 4.0;
            let px = self.map_x(fx);
            out.push_str(&format!(
                "  <line x1=\"{px:.1}\" y1=\"{y0}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"#444\" stroke-width=\"1\"/>\n",
                y0 + 4.0
            ));
            out.push_str(&format!(
                "  <text x=\"{px:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333\">{}</text>\n",
                y0 + 18.0,
                fmt_tick(fx)
            ));
            let fy = self.y_min + (self.y_max - self.y_min) * k as f64 / 4.0;
            let py = self.map_y(fy);
            out.push_str(&format!(
                "  <line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{x0}\" y2=\"{py:.1}\" stroke=\"#444\" stroke-width=\"1\"/>\n",
                x0 - 4.0
            ));
            out.push_str(&format!(
                "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\" fill=\"#333\">{}</text>\n",
                x0 - 8.0,
                py + 4.0,
                fmt_tick(fy)
            ));
        }
        out.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" fill=\"#111\">{}</text>\n",
            (x0 + x1) / 2.0,
            self.height - 12.0,
            svg_escape(&self.x_label)
        ));
        out.push_str(&format!(
            "  <text x=\"18\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" fill=\"#111\" transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            svg_escape(&self.y_label)
        ));
        out.push_str(&self.body);
        out.push_str("</svg>\n");
        out
    }
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

/// Δa figure: median across seeds as a solid line inside a min–max band.
pub fn render_delta_figure(per_seed: &[(u64, Vec<f64>)], env: &str) -> String {
    let series: Vec<Vec<f64>> = per_seed.iter().map(|(_, s)| s.clone()).collect();
    let (median, lo, hi) = median_band(&series);
    let xs: Vec<f64> = (1..=median.len()).map(|i| i as f64).collect();
    let mut all = median.clone();
    all.extend_from_slice(&lo);
    all.extend_from_slice(&hi);
    let mut fig = Figure::new(
        &format!("Per-step action change on {env} ({} seeds)", per_seed.len()),
        "step",
        "mean |delta a| per step",
        &xs,
        &all,
    );
    fig.band(&xs, &lo, &hi, PALETTE[0]);
    fig.polyline(&xs, &median, PALETTE[0], 2.0);
    fig.legend(&[
        ("median across seeds".to_string(), PALETTE[0].to_string()),
        ("min-max band".to_string(), PALETTE[0].to_string()),
    ]);
    fig.render()
}

/// Raw action trace figure: every action dimension of one episode.
pub fn render_trace_figure(trace: &ActionTrace, env: &str, seed: u64) -> String {
    let steps = trace.actions.len();
    let xs: Vec<f64> = (0..steps).map(|i| i as f64).collect();
    let dims = trace.action_dim();
    let all: Vec<f64> = trace.actions.iter().flatten().copied().collect();
    let mut fig = Figure::new(
        &format!("Actions on {env} (seed {seed}, episode {})", trace.episode),
        "step",
        "action",
        &xs,
        &all,
    );
    let mut legend = Vec::new();
    for d in 0..dims {
        let ys = trace.column(d);
        let color = PALETTE[d % PALETTE.len()];
        fig.polyline(&xs, &ys, color, 1.5);
        legend.push((format!("a_{d}"), color.to_string()));
    }
    fig.legend(&legend);
    fig.render()
}

/// Amplitude spectrum figure: one curve per action dimension of one episode.
pub fn render_spectrum_figure(trace: &ActionTrace, env: &str, seed: u64) -> Result<String> {
    let dims = trace.action_dim();
    let mut curves = Vec::with_capacity(dims);
    for d in 0..dims {
        let spectrum = dft_magnitudes(&trace.column(d), trace.f_s)?;
        curves.push((spectrum.frequencies, spectrum.magnitudes));
    }
    let xs_all: Vec<f64> = curves.iter().flat_map(|(f, _)| f.iter().copied()).collect();
    let ys_all: Vec<f64> = curves.iter().flat_map(|(_, m)| m.iter().copied()).collect();
    let mut fig = Figure::new(
        &format!("Action amplitude spectrum on {env} (seed {seed}, episode {})", trace.episode),
        "frequency (Hz)",
        "amplitude",
        &xs_all,
        &ys_all,
    );
    let mut legend = Vec::new();
    for (d, (fs, ms)) in curves.iter().enumerate() {
        let color = PALETTE[d % PALETTE.len()];
        fig.polyline(fs, ms, color, 1.5);
        legend.push((format!("a_{d}"), color.to_string()));
    }
    fig.legend(&legend);
    Ok(fig.render())
}

/// Reads every seed's traces under a config-level run directory and writes
/// `delta_a.svg`, `traces.svg`, and `spectrum.svg` next to them.
pub fn cmd_plot(dir: &Path) -> Result<Vec<PathBuf>> {
    let cfg = ExperimentConfig::from_file(&dir.join("config.ini"))
        .map_err(|e| anyhow::anyhow!("{}: {e}", dir.join("config.ini").display()))?;
    let f_s = build_dynamics(&cfg.env_name, &cfg.env_params)?.spec().control_hz();

    let mut seed_dirs: Vec<(u64, PathBuf)> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("traces.csv").is_file())
        .filter_map(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.parse::<u64>().ok())
                .map(|seed| (seed, p.clone()))
        })
        .collect();
    seed_dirs.sort_by_key(|(seed, _)| *seed);
    if seed_dirs.is_empty() {
        anyhow::bail!("no seed directories with traces.csv under {}", dir.display());
    }

    let mut per_seed_delta: Vec<(u64, Vec<f64>)> = Vec::new();
    let mut first_traces: Option<(u64, Vec<ActionTrace>)> = None;
    for (seed, path) in &seed_dirs {
        let text = std::fs::read_to_string(path.join("traces.csv"))?;
        let traces = parse_traces_csv(&text, f_s)
            .with_context(|| format!("parsing {}", path.join("traces.csv").display()))?;
        if traces.is_empty() {
            anyhow::bail!("{} holds no episodes", path.join("traces.csv").display());
        }
        per_seed_delta.push((*seed, delta_series(&traces)));
        if first_traces.is_none() {
            first_traces = Some((*seed, traces));
        }
    }
    let (first_seed, traces) = first_traces.expect("at least one seed");

    let delta = render_delta_figure(&per_seed_delta, &cfg.env_name);
    let trace_fig = render_trace_figure(&traces[0], &cfg.env_name, first_seed);
    let spectrum = render_spectrum_figure(&traces[0], &cfg.env_name, first_seed)?;

    let outputs = [
        (dir.join("delta_a.svg"), delta),
        (dir.join("traces.svg"), trace_fig),
        (dir.join("spectrum.svg"), spectrum),
    ];
    let mut written = Vec::new();
    for (path, content) in outputs {
        atomic_write(&path, content.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

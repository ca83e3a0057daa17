//! Standalone SVG line plots of sweep datasets.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{IsacError, Result};
use crate::sweep::SweepRow;

/// One figure: which metrics to draw and on what scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub file: String,
    pub title: String,
    pub y_label: String,
    pub log_y: bool,
    pub metrics: Vec<String>,
}

impl PlotSpec {
    fn new(file: &str, title: &str, y_label: &str, log_y: bool, metrics: &[&str]) -> Self {
        Self {
            file: file.into(),
            title: title.into(),
            y_label: y_label.into(),
            log_y,
            metrics: metrics.iter().map(|m| m.to_string()).collect(),
        }
    }
}

pub fn default_plot_specs() -> Vec<PlotSpec> {
    let rates = |p: &str| -> Vec<String> {
        ["proposed", "random", "genie"].iter().map(|v| format!("rate_{p}_{v}")).collect()
    };
    let mut specs = vec![PlotSpec::new("rmse.svg", "Localization RMSE", "RMSE (m)", true, &["rmse_block1", "rmse_block2"])];
    for (p, title) in [("isac", "ISAC period"), ("pc", "PC period"), ("overall", "Whole block")] {
        let m = rates(p);
        let refs: Vec<&str> = m.iter().map(String::as_str).collect();
        specs.push(PlotSpec::new(&format!("rate_{p}.svg"), &format!("Sum rate, {title}"), "bit/s/Hz", false, &refs));
    }
    specs
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Renders one figure. `None` when the dataset holds none of its metrics.
pub fn render_svg(rows: &[SweepRow], spec: &PlotSpec, x_label: &str) -> Option<String> {
    let mut series: Vec<(&str, Vec<(f64, f64)>)> = Vec::new();
    for m in &spec.metrics {
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| &r.metric == m && r.mean.is_finite() && (!spec.log_y || r.mean > 0.0))
            .map(|r| (r.sweep_value, if spec.log_y { r.mean.log10() } else { r.mean }))
            .collect();
        if !pts.is_empty() {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            series.push((m, pts));
        }
    }
    if series.is_empty() {
        return None;
    }
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (x0, x1) = nice_range(x0, x1);
    let (y0, y1) = if spec.log_y { (y0.floor(), y1.ceil().max(y0.floor() + 1.0)) } else { nice_range(y0, y1) };
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, esc(&spec.title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);

    for i in 0..=4 {
        let x = x0 + (x1 - x0) * i as f64 / 4.0;
        let px = sx(x);
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, fmt_tick(x));
    }
    let ticks: Vec<f64> = if spec.log_y {
        (y0 as i32..=y1 as i32).map(f64::from).collect()
    } else {
        (0..=4).map(|i| y0 + (y1 - y0) * i as f64 / 4.0).collect()
    };
    for y in ticks {
        let py = sy(y);
        let label = if spec.log_y { format!("1e{}", y as i32) } else { fmt_tick(y) };
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#dddddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{label}</text>"#, LEFT - 6.0, py + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 10.0, esc(x_label));
    let _ = writeln!(s, r#"<text x="16" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#, TOP + ph / 2.0, TOP + ph / 2.0, esc(&spec.y_label));

    for (i, (name, pts)) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, path.join(" "));
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="3.5" fill="{c}"/>"#, sx(x), sy(y));
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#, lx + 22.0, ly + 4.0, esc(name));
    }
    s.push_str("</svg>\n");
    Some(s)
}

fn fmt_tick(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    if r == 0.0 { "0".into() } else { format!("{r}") }
}

/// Writes one SVG per spec that has data. An empty result is an error.
pub fn emit_plots(rows: &[SweepRow], specs: &[PlotSpec], x_label: &str, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(IsacError::Plot("dataset is empty".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for spec in specs {
        if let Some(svg) = render_svg(rows, spec, x_label) {
            let path = out_dir.join(&spec.file);
            std::fs::write(&path, svg)?;
            written.push(path);
        }
    }
    if written.is_empty() {
        let wanted: Vec<&str> = specs.iter().flat_map(|s| s.metrics.iter().map(String::as_str)).collect();
        return Err(IsacError::Plot(format!("dataset has none of the metrics {wanted:?}")));
    }
    Ok(written)
}

//! SVG line charts of a trace: load voltages, source currents and duty ratios.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::controller::NodeLimits;
use crate::grid::GridParameters;
use crate::trace::TraceTable;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("trace has no samples")]
    Empty,
    #[error("guide bounds cover {guides} nodes, trace has {trace}")]
    GuideMismatch { guides: usize, trace: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];
const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 130.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
/// Samples kept per curve; longer traces are reduced to per-bucket min/max.
const MAX_POINTS: usize = 2400;

/// Bounds drawn as dashed guide lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Guides {
    pub voltage: Vec<(f64, f64)>,
    /// Joint safe current band `[Ĩ_l, Ĩ_h]` per node.
    pub current: Vec<(f64, f64)>,
}

impl Guides {
    pub fn from_params(params: &GridParameters) -> Self {
        Self {
            voltage: params.nodes.iter().map(|p| (p.v_min, p.v_max)).collect(),
            current: params
                .nodes
                .iter()
                .map(|p| {
                    let b = NodeLimits::from(p).effective_current_bounds();
                    (b.lower, b.upper)
                })
                .collect(),
        }
    }
}

struct Series {
    label: String,
    color: &'static str,
    points: Vec<(f64, f64)>,
}

struct GuideLine {
    y: f64,
    color: &'static str,
}

struct Chart {
    title: String,
    y_label: String,
    series: Vec<Series>,
    guides: Vec<GuideLine>,
}

fn decimate(t: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    if t.len() <= MAX_POINTS {
        return t.iter().copied().zip(y.iter().copied()).collect();
    }
    let buckets = MAX_POINTS / 2;
    let per = t.len().div_ceil(buckets);
    let mut out = Vec::with_capacity(MAX_POINTS + 2);
    for start in (0..t.len()).step_by(per) {
        let end = (start + per).min(t.len());
        let (mut lo, mut hi) = (start, start);
        for k in start..end {
            if y[k] < y[lo] {
                lo = k;
            }
            if y[k] > y[hi] {
                hi = k;
            }
        }
        let (a, b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        out.push((t[a], y[a]));
        if b != a {
            out.push((t[b], y[b]));
        }
    }
    let last = t.len() - 1;
    if out.last().map(|p| p.0) != Some(t[last]) {
        out.push((t[last], y[last]));
    }
    out
}

fn nice_step(range: f64, target: usize) -> f64 {
    let raw = range / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo, 6);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(x: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{x:.decimals$}")
}

fn render(chart: &Chart) -> String {
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &chart.series {
        for &(x, y) in &s.points {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            if y.is_finite() {
                y_lo = y_lo.min(y);
                y_hi = y_hi.max(y);
            }
        }
    }
    for g in &chart.guides {
        y_lo = y_lo.min(g.y);
        y_hi = y_hi.max(g.y);
    }
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    let span = y_hi - y_lo;
    let pad = if span > 0.0 { 0.05 * span } else { 0.5 * y_lo.abs().max(1.0) };
    y_lo -= pad;
    y_hi += pad;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        chart.title
    );

    let x_step = nice_step(x_hi - x_lo, 8);
    for x in ticks(x_lo, x_hi) {
        let px = sx(x);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{MARGIN_TOP}" x2="{px:.2}" y2="{:.2}" stroke="#e6e6e6"/>"##,
            MARGIN_TOP + plot_h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + plot_h + 18.0,
            tick_label(x, x_step)
        );
    }
    let y_step = nice_step(y_hi - y_lo, 6);
    for y in ticks(y_lo, y_hi) {
        let py = sy(y);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#e6e6e6"/>"##,
            MARGIN_LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            py + 4.0,
            tick_label(y, y_step)
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time (s)</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        chart.y_label
    );

    for g in &chart.guides {
        let py = sy(g.y);
        let _ = writeln!(
            svg,
            r#"<line x1="{MARGIN_LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="{}" stroke-dasharray="6 4" stroke-width="1"/>"#,
            MARGIN_LEFT + plot_w,
            g.color
        );
    }

    for s in &chart.series {
        let mut d = String::with_capacity(s.points.len() * 16);
        for &(x, y) in &s.points {
            let _ = write!(d, "{:.2},{:.2} ", sx(x), sy(y));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.3" points="{}"/>"#,
            s.color,
            d.trim_end()
        );
    }

    for (k, s) in chart.series.iter().enumerate() {
        let y = MARGIN_TOP + 14.0 + 18.0 * k as f64;
        let x = MARGIN_LEFT + plot_w + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="2"/>"#,
            x + 22.0,
            s.color
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 28.0,
            y + 4.0,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn series(table: &TraceTable, pick: impl Fn(&crate::trace::TraceRow) -> &Vec<f64>) -> Vec<Series> {
    let t: Vec<f64> = table.rows.iter().map(|r| r.t).collect();
    (0..table.nodes)
        .map(|i| {
            let y: Vec<f64> = table.rows.iter().map(|r| pick(r)[i]).collect();
            Series {
                label: format!("DGU {}", i + 1),
                color: PALETTE[i % PALETTE.len()],
                points: decimate(&t, &y),
            }
        })
        .collect()
}

/// Writes `voltage.svg`, `current.svg` and `duty.svg` into `out_dir` and
/// returns their paths. Nothing is written for an empty trace.
pub fn emit_plots(
    table: &TraceTable,
    guides: Option<&Guides>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, PlotError> {
    if table.rows.is_empty() || table.nodes == 0 {
        return Err(PlotError::Empty);
    }
    if let Some(g) = guides {
        if g.voltage.len() != table.nodes || g.current.len() != table.nodes {
            return Err(PlotError::GuideMismatch {
                guides: g.voltage.len(),
                trace: table.nodes,
            });
        }
    }

    let mut voltage_guides = Vec::new();
    let mut current_guides = Vec::new();
    if let Some(g) = guides {
        let mut seen: Vec<f64> = Vec::new();
        for &(lo, hi) in &g.voltage {
            for y in [lo, hi] {
                if !seen.contains(&y) {
                    seen.push(y);
                    voltage_guides.push(GuideLine { y, color: "#444444" });
                }
            }
        }
        for (i, &(lo, hi)) in g.current.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            current_guides.push(GuideLine { y: lo, color });
            current_guides.push(GuideLine { y: hi, color });
        }
    }

    let charts = [
        (
            "voltage.svg",
            Chart {
                title: "Load voltage per DGU".into(),
                y_label: "V (V)".into(),
                series: series(table, |r| &r.voltage),
                guides: voltage_guides,
            },
        ),
        (
            "current.svg",
            Chart {
                title: "Source current per DGU".into(),
                y_label: "I (A)".into(),
                series: series(table, |r| &r.current),
                guides: current_guides,
            },
        ),
        (
            "duty.svg",
            Chart {
                title: "Duty ratio per DGU".into(),
                y_label: "u".into(),
                series: series(table, |r| &r.duty),
                guides: Vec::new(),
            },
        ),
    ];

    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (name, chart) in &charts {
        let path = out_dir.join(name);
        fs::write(&path, render(chart))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimation_keeps_extremes_and_endpoints() {
        let t: Vec<f64> = (0..100_000).map(|k| k as f64 * 1e-5).collect();
        let mut y = vec![0.0; t.len()];
        y[54_321] = 7.0;
        y[77_777] = -3.0;
        let d = decimate(&t, &y);
        assert!(d.len() <= MAX_POINTS + 2);
        assert!(d.contains(&(t[54_321], 7.0)));
        assert!(d.contains(&(t[77_777], -3.0)));
        assert_eq!(d.first().unwrap().0, 0.0);
        assert_eq!(d.last().unwrap().0, t[t.len() - 1]);
        assert!(d.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn tick_steps() {
        assert_eq!(nice_step(0.5, 8), 0.1);
        assert_eq!(nice_step(22.0, 6), 5.0);
        assert_eq!(ticks(0.0, 0.5).len(), 6);
        assert_eq!(tick_label(0.25, 0.05), "0.25");
    }
}

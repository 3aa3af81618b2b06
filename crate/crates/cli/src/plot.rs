//! Self-contained SVG line charts of trace quantities.
//!
//! The ordinate is logarithmic, which is where convergence traces live.
//! Values at or below [`LOG_FLOOR`] (exact zeros, tiny negatives from
//! cancellation) cannot be placed on a log axis, so they are drawn at the
//! floor and counted; the count lands in the SVG `<desc>` element and in
//! the returned stats. The companion CSV carries the raw, unclamped
//! values.

use std::fmt::Write;

use gtdyn_core::dynamics::TraceRecord;
use gtdyn_core::{Error, Result};

/// Chart floor for values a log axis cannot represent.
pub const LOG_FLOOR: f64 = 1e-16;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 46.0;
const MARGIN_BOTTOM: f64 = 56.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlotStats {
    /// Samples drawn at the floor instead of their true value.
    pub clamped: usize,
    /// Total samples drawn across all series.
    pub points: usize,
}

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    values: Vec<(u64, f64)>,
}

/// Renders residual (when the trace has one) and disagreement versus the
/// step index. Errors on an empty trace.
pub fn render_log_chart(trace: &[TraceRecord], title: &str) -> Result<(String, PlotStats)> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }

    let mut series = Vec::new();
    if trace.iter().any(|r| r.residual.is_some()) {
        series.push(Series {
            label: "residual",
            color: "#c0392b",
            values: trace
                .iter()
                .filter_map(|r| r.residual.map(|v| (r.k, v)))
                .collect(),
        });
    }
    series.push(Series {
        label: "disagreement",
        color: "#2470a0",
        values: trace.iter().map(|r| (r.k, r.disagreement)).collect(),
    });

    let k_min = trace.first().map(|r| r.k).unwrap_or(0);
    let k_max = trace.last().map(|r| r.k).unwrap_or(0);
    let k_span = (k_max - k_min).max(1) as f64;

    let mut clamped = 0usize;
    let mut points = 0usize;
    let mut v_max: f64 = LOG_FLOOR;
    for s in &series {
        for &(_, v) in &s.values {
            points += 1;
            if v <= LOG_FLOOR || !v.is_finite() {
                clamped += 1;
            } else {
                v_max = v_max.max(v);
            }
        }
    }

    let floor_exp = LOG_FLOOR.log10().round() as i32;
    let top_exp = (v_max.log10().ceil() as i32).max(floor_exp + 1);
    let decades = (top_exp - floor_exp) as f64;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

    let x_of = |k: u64| MARGIN_LEFT + plot_w * ((k - k_min) as f64) / k_span;
    let y_of = |v: f64| {
        let v = if v.is_finite() { v.max(LOG_FLOOR) } else { LOG_FLOOR };
        MARGIN_TOP + plot_h * (top_exp as f64 - v.log10()) / decades
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(
        svg,
        "<desc>{title}: log-scale trace chart; {clamped} of {points} samples clamped to {LOG_FLOOR:e}</desc>"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        xml_escape(title)
    );

    // Axes and decade grid.
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = MARGIN_TOP;
    let y1 = HEIGHT - MARGIN_BOTTOM;
    let tick_step = (((decades / 8.0).ceil()) as i32).max(1);
    let mut exp = floor_exp;
    while exp <= top_exp {
        let y = y_of(10f64.powi(exp));
        let _ = writeln!(
            svg,
            "<line x1=\"{x0}\" y1=\"{y:.2}\" x2=\"{x1}\" y2=\"{y:.2}\" stroke=\"#dddddd\" stroke-width=\"1\"/>"
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">1e{exp}</text>",
            x0 - 6.0,
            y + 4.0
        );
        exp += tick_step;
    }
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let k = k_min + ((k_span * frac).round() as u64);
        let x = x_of(k.min(k_max));
        let _ = writeln!(
            svg,
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{k}</text>",
            y1 + 18.0
        );
    }
    let _ = writeln!(
        svg,
        "<line x1=\"{x0}\" y1=\"{y1}\" x2=\"{x1}\" y2=\"{y1}\" stroke=\"black\" stroke-width=\"1\"/>"
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\" stroke-width=\"1\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">k</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 14.0
    );

    // Series polylines and legend.
    for (idx, s) in series.iter().enumerate() {
        let mut pts = String::new();
        for &(k, v) in &s.values {
            let _ = write!(pts, "{:.2},{:.2} ", x_of(k), y_of(v));
        }
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>",
            s.color,
            pts.trim_end()
        );
        let lx = x0 + 12.0 + 150.0 * idx as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{lx}\" y=\"{:.2}\" width=\"18\" height=\"4\" fill=\"{}\"/>",
            y0 - 10.0,
            s.color
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            lx + 24.0,
            y0 - 4.0,
            s.label
        );
    }

    let _ = writeln!(svg, "</svg>");
    Ok((svg, PlotStats { clamped, points }))
}

/// The plotted series as CSV, raw values, residual column empty when the
/// run had no reference optimum. Errors on an empty trace.
pub fn series_csv(trace: &[TraceRecord]) -> Result<String> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut out = String::from("k,residual,disagreement\n");
    for r in trace {
        out.push_str(&r.k.to_string());
        out.push(',');
        if let Some(res) = r.residual {
            out.push_str(&res.to_string());
        }
        out.push(',');
        out.push_str(&r.disagreement.to_string());
        out.push('\n');
    }
    Ok(out)
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

//! Orchestration: single runs, sweep grids, bounds and oracle reports.
//!
//! A run emits `config.json` (the resolved config echo), `trace.csv`,
//! `summary.json`, `bounds.json`, `oracle.json` (when the centralized
//! solve succeeded), `plot.svg` and `plot.csv` into its output directory.
//! A sweep executes its cells concurrently, each into its own directory
//! under `cells/`, and writes one `sweep.csv` row per cell in grid order.
//! All artifact writes are atomic.

use std::path::{Path, PathBuf};

use gtdyn_core::dynamics::{run, segment_bounds, RunOutcome, RunSummary, XInit};
use gtdyn_core::oracle::{OracleResult, SolveMethod};
use gtdyn_core::spectral::StepSizeBounds;
use gtdyn_core::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{trace_to_csv, verdict_label, write_atomic};
use crate::config::ExperimentConfig;
use crate::plot::{render_log_chart, series_csv};

pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub trace_csv: PathBuf,
    pub summary_json: PathBuf,
    pub bounds_json: PathBuf,
    pub plot_svg: PathBuf,
    pub plot_csv: PathBuf,
    pub oracle_json: Option<PathBuf>,
}

#[derive(Serialize)]
pub struct BoundsSegment {
    pub start: u64,
    pub bounds: StepSizeBounds,
}

/// Per-segment step-size bounds plus their field-wise worst case.
#[derive(Serialize)]
pub struct BoundsReport {
    pub segments: Vec<BoundsSegment>,
    pub minimum: Option<StepSizeBounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// JSON shape of the centralized solve.
#[derive(Serialize)]
pub struct OracleReport {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub grad_norm: f64,
    pub iterations: u64,
    pub method: SolveMethod,
}

impl From<&OracleResult> for OracleReport {
    fn from(r: &OracleResult) -> Self {
        Self {
            x_star: r.x_star.iter().copied().collect(),
            f_star: r.f_star,
            grad_norm: r.grad_norm,
            iterations: r.iterations,
            method: r.method,
        }
    }
}

fn json_pretty<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    text
}

/// Executes one configured run end to end: centralized oracle (soft —
/// a failure only costs the residual reference), bounds report, the
/// iteration itself, artifacts. Diverged and timed-out are verdicts, not
/// errors; errors mean the config or the environment is unusable.
pub fn execute_run(
    config: &ExperimentConfig,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<(RunOutcome, RunArtifacts)> {
    config.validate()?;
    if config.sweep.is_some() {
        return Err(Error::InvalidConfig(
            "config defines a sweep grid; use the sweep command".into(),
        ));
    }
    let schedule = config.schedule.resolve(base_dir)?;
    let cost = config.cost.build(base_dir)?;
    if cost.model().n_nodes() != schedule.n() {
        return Err(Error::DimensionMismatch(format!(
            "cost has {} nodes, schedule has {}",
            cost.model().n_nodes(),
            schedule.n()
        )));
    }

    let oracle = match cost.solve_oracle() {
        Ok(r) => Some(r),
        Err(e) => {
            eprintln!("warning: centralized solve failed ({e}); running without a residual reference");
            None
        }
    };
    let f_star = oracle.as_ref().map(|o| o.f_star);

    let bounds_report = match segment_bounds(&schedule, cost.model(), config.sim.t) {
        Ok(segments) => {
            let minimum = segments
                .iter()
                .map(|(_, b)| *b)
                .reduce(|a, b| a.component_min(&b));
            BoundsReport {
                segments: segments
                    .into_iter()
                    .map(|(start, bounds)| BoundsSegment { start, bounds })
                    .collect(),
                minimum,
                error: None,
            }
        }
        Err(e) => BoundsReport {
            segments: Vec::new(),
            minimum: None,
            error: Some(e.to_string()),
        },
    };

    let outcome = run(&config.sim, &schedule, cost.model(), f_star)?;

    let artifacts = write_run_artifacts(config, &outcome, oracle.as_ref(), &bounds_report, out_dir)?;
    Ok((outcome, artifacts))
}

fn write_run_artifacts(
    config: &ExperimentConfig,
    outcome: &RunOutcome,
    oracle: Option<&OracleResult>,
    bounds: &BoundsReport,
    out_dir: &Path,
) -> Result<RunArtifacts> {
    let path = |name: &str| out_dir.join(name);

    write_atomic(&path("config.json"), config.to_json().as_bytes())?;
    let trace_csv = path("trace.csv");
    write_atomic(&trace_csv, trace_to_csv(&outcome.trace).as_bytes())?;
    let summary_json = path("summary.json");
    write_atomic(&summary_json, json_pretty(&outcome.summary).as_bytes())?;
    let bounds_json = path("bounds.json");
    write_atomic(&bounds_json, json_pretty(bounds).as_bytes())?;

    let oracle_json = match oracle {
        Some(o) => {
            let p = path("oracle.json");
            write_atomic(&p, json_pretty(&OracleReport::from(o)).as_bytes())?;
            Some(p)
        }
        None => None,
    };

    let (svg, _stats) = render_log_chart(&outcome.trace, &config.name)?;
    let plot_svg = path("plot.svg");
    write_atomic(&plot_svg, svg.as_bytes())?;
    let plot_csv = path("plot.csv");
    write_atomic(&plot_csv, series_csv(&outcome.trace)?.as_bytes())?;

    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        trace_csv,
        summary_json,
        bounds_json,
        plot_svg,
        plot_csv,
        oracle_json,
    })
}

pub struct CellOutcome {
    pub alpha: f64,
    pub eta: f64,
    pub seed: u64,
    pub summary: RunSummary,
    pub dir: PathBuf,
}

/// The config a single sweep cell runs: explicit step sizes, and the
/// cell's seed when the initial state is random.
pub fn cell_config(base: &ExperimentConfig, alpha: f64, eta: f64, seed: u64) -> ExperimentConfig {
    let mut config = base.clone();
    config.sweep = None;
    config.sim.alpha = alpha;
    config.sim.eta = eta;
    config.sim.bound_policy = gtdyn_core::dynamics::BoundPolicy::Manual;
    if matches!(config.sim.x_init, XInit::Random { .. }) {
        config.sim.x_init = XInit::Random { seed };
    }
    config
}

pub fn cell_dir_name(alpha: f64, eta: f64, seed: u64) -> String {
    format!("alpha{alpha}-eta{eta}-seed{seed}")
}

/// Runs every cell of the sweep grid, concurrently, each into
/// `out_dir/cells/<cell>/`, then writes the combined `sweep.csv`. Cells
/// that merely diverge or time out still count as completed; an `Err`
/// means some cell could not run at all.
pub fn execute_sweep(
    config: &ExperimentConfig,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<Vec<CellOutcome>> {
    config.validate()?;
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("config has no sweep grid".into()))?;

    let cells = sweep.cells();
    let results: Result<Vec<CellOutcome>> = cells
        .par_iter()
        .map(|&(alpha, eta, seed)| {
            let cc = cell_config(config, alpha, eta, seed);
            let dir = out_dir.join("cells").join(cell_dir_name(alpha, eta, seed));
            let (outcome, _) = execute_run(&cc, base_dir, &dir)?;
            Ok(CellOutcome {
                alpha,
                eta,
                seed,
                summary: outcome.summary,
                dir,
            })
        })
        .collect();
    let results = results?;

    let mut csv = String::from("alpha,eta,seed,verdict,final_residual,iters_to_tol\n");
    for r in &results {
        csv.push_str(&format!("{},{},{},{}", r.alpha, r.eta, r.seed, verdict_label(r.summary.verdict)));
        csv.push(',');
        if let Some(res) = r.summary.final_residual {
            csv.push_str(&res.to_string());
        }
        csv.push(',');
        if let Some(iters) = r.summary.iters_to_tol {
            csv.push_str(&iters.to_string());
        }
        csv.push('\n');
    }
    write_atomic(&out_dir.join("sweep.csv"), csv.as_bytes())?;
    Ok(results)
}

/// Bounds-only report, written to `bounds.json` under `out_dir`.
pub fn execute_bounds(
    config: &ExperimentConfig,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<BoundsReport> {
    let schedule = config.schedule.resolve(base_dir)?;
    let cost = config.cost.build(base_dir)?;
    let segments = segment_bounds(&schedule, cost.model(), config.sim.t.max(1))?;
    let minimum = segments
        .iter()
        .map(|(_, b)| *b)
        .reduce(|a, b| a.component_min(&b));
    let report = BoundsReport {
        segments: segments
            .into_iter()
            .map(|(start, bounds)| BoundsSegment { start, bounds })
            .collect(),
        minimum,
        error: None,
    };
    write_atomic(&out_dir.join("bounds.json"), json_pretty(&report).as_bytes())?;
    Ok(report)
}

/// Centralized solve only, written to `oracle.json` under `out_dir`.
pub fn execute_oracle(
    config: &ExperimentConfig,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<OracleReport> {
    let cost = config.cost.build(base_dir)?;
    let report = OracleReport::from(&cost.solve_oracle()?);
    write_atomic(&out_dir.join("oracle.json"), json_pretty(&report).as_bytes())?;
    Ok(report)
}

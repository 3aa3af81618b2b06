//! The JSON experiment schema and its resolution into core objects.
//!
//! A config document names a schedule spec, a cost spec, the iteration
//! parameters, and optionally a sweep grid. Specs either spell their data
//! out inline or point at files; relative paths are resolved against the
//! directory the config file lives in. Parsing a serialized config yields
//! a value equal to the original, so configs echo losslessly into run
//! artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use gtdyn_core::costs::{
    generate_ring_dataset, CostModel, LabeledDataset, QuadraticCost, SvmCost,
};
use gtdyn_core::dynamics::{SimConfig, XInit};
use gtdyn_core::graphs::{
    random_weight_balanced_digraph, ScheduleJson, SwitchingSchedule, SwitchingSignal,
    TopologyEvent, DEFAULT_BALANCE_TOL,
};
use gtdyn_core::oracle::{solve_centralized, solve_quadratic_closed_form, OracleResult};
use gtdyn_core::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Iteration cap for the centralized solver behind `f_star`.
pub const ORACLE_MAX_ITERS: u64 = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Free-form label carried into artifacts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub schedule: ScheduleSpec,
    pub cost: CostSpec,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads and validates a config file; also returns the directory that
    /// relative references inside the config resolve against.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        let base = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        Ok((config, base))
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidConfig("experiment name must not be empty".into()));
        }
        if let Some(sweep) = &self.sweep {
            sweep.validate()?;
            if sweep.seeds.len() > 1 && !matches!(self.sim.x_init, XInit::Random { .. }) {
                return Err(Error::InvalidConfig(
                    "sweeping seeds requires a random initial state".into(),
                ));
            }
            if self.sim.t == 0 {
                return Err(Error::InvalidConfig("horizon T must be positive".into()));
            }
        } else {
            self.sim.validate()?;
        }
        Ok(())
    }
}

/// Where the switching schedule comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// A schedule document in its own JSON file.
    File { path: PathBuf },
    /// The schedule document spelled out in place.
    Inline { schedule: ScheduleJson },
    /// Seeded random weight-balanced snapshots, rotated blockwise.
    Generated {
        n: usize,
        #[serde(default = "default_cycles")]
        cycles: usize,
        /// Number of distinct snapshots; snapshot `i` is seeded `seed + i`.
        #[serde(default = "default_one_usize")]
        count: usize,
        /// Steps each snapshot stays active.
        #[serde(default = "default_one_u64")]
        block: u64,
        seed: u64,
        /// Reuse the x-layer weights for the tracker layer.
        #[serde(default)]
        equal_layers: bool,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        events: Vec<TopologyEvent>,
    },
}

fn default_cycles() -> usize {
    2
}

fn default_one_usize() -> usize {
    1
}

fn default_one_u64() -> u64 {
    1
}

impl ScheduleSpec {
    pub fn resolve(&self, base_dir: &Path) -> Result<SwitchingSchedule> {
        match self {
            ScheduleSpec::File { path } => {
                let text = fs::read_to_string(resolve_path(base_dir, path))?;
                let doc: ScheduleJson = serde_json::from_str(&text)?;
                doc.into_schedule(DEFAULT_BALANCE_TOL)
            }
            ScheduleSpec::Inline { schedule } => {
                schedule.clone().into_schedule(DEFAULT_BALANCE_TOL)
            }
            ScheduleSpec::Generated {
                n,
                cycles,
                count,
                block,
                seed,
                equal_layers,
                events,
            } => {
                if *count == 0 {
                    return Err(Error::InvalidConfig("snapshot count must be positive".into()));
                }
                if *count > 1 && *block == 0 {
                    return Err(Error::InvalidConfig(
                        "rotating snapshots need a positive block length".into(),
                    ));
                }
                let graphs = (0..*count)
                    .map(|i| {
                        let g = random_weight_balanced_digraph(
                            *n,
                            *cycles,
                            seed.wrapping_add(i as u64),
                        );
                        if *equal_layers {
                            g.with_equal_layers()
                        } else {
                            g
                        }
                    })
                    .collect();
                let signal = if *count == 1 {
                    SwitchingSignal::Constant { index: 0 }
                } else {
                    SwitchingSignal::Periodic { block: *block }
                };
                SwitchingSchedule::new(graphs, signal, events.clone())
            }
        }
    }
}

/// Which objective the nodes share.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostSpec {
    /// Per-node quadratics; omitted curvatures mean identity everywhere.
    Quadratic {
        centers: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        curvatures: Option<Vec<Vec<Vec<f64>>>>,
    },
    /// Soft-margin classifier over a dataset partitioned across nodes.
    Svm {
        nodes: usize,
        dataset: DatasetSpec,
        /// Fraction of the dataset each node holds.
        #[serde(default = "default_fraction")]
        fraction: f64,
        #[serde(default)]
        partition_seed: u64,
        mu: f64,
        c: f64,
        #[serde(default)]
        nu_ridge: f64,
    },
}

fn default_fraction() -> f64 {
    0.2
}

/// A built cost plus enough type information to pick the right oracle.
pub enum BuiltCost {
    Quadratic(QuadraticCost),
    Svm(SvmCost),
}

impl BuiltCost {
    pub fn model(&self) -> &dyn CostModel {
        match self {
            BuiltCost::Quadratic(q) => q,
            BuiltCost::Svm(s) => s,
        }
    }

    /// Centralized reference optimum: closed form for quadratics, damped
    /// Newton otherwise.
    pub fn solve_oracle(&self) -> Result<OracleResult> {
        match self {
            BuiltCost::Quadratic(q) => solve_quadratic_closed_form(q),
            BuiltCost::Svm(s) => solve_centralized(s, None, ORACLE_MAX_ITERS),
        }
    }
}

impl CostSpec {
    pub fn build(&self, base_dir: &Path) -> Result<BuiltCost> {
        match self {
            CostSpec::Quadratic { centers, curvatures } => {
                let centers: Vec<DVector<f64>> =
                    centers.iter().map(|c| DVector::from_row_slice(c)).collect();
                let cost = match curvatures {
                    None => QuadraticCost::homogeneous(centers)?,
                    Some(qs) => {
                        let m = centers.first().map(|c| c.len()).unwrap_or(0);
                        let qs = qs
                            .iter()
                            .map(|rows| matrix_from_rows(rows, m))
                            .collect::<Result<Vec<_>>>()?;
                        QuadraticCost::new(centers, qs)?
                    }
                };
                Ok(BuiltCost::Quadratic(cost))
            }
            CostSpec::Svm {
                nodes,
                dataset,
                fraction,
                partition_seed,
                mu,
                c,
                nu_ridge,
            } => {
                let data = dataset.resolve(base_dir)?;
                Ok(BuiltCost::Svm(SvmCost::from_partition(
                    &data,
                    *nodes,
                    *fraction,
                    *partition_seed,
                    *mu,
                    *c,
                    *nu_ridge,
                )?))
            }
        }
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], m: usize) -> Result<DMatrix<f64>> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(Error::DimensionMismatch(format!(
            "curvature must be {m}x{m} to match the centers"
        )));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

/// Where the classification dataset comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// CSV file with an `x1,x2,label` header.
    File { path: PathBuf },
    /// Seeded two-ring generator.
    Ring {
        points: usize,
        inner_radius: f64,
        outer_radius: f64,
        noise: f64,
        seed: u64,
    },
}

impl DatasetSpec {
    pub fn resolve(&self, base_dir: &Path) -> Result<LabeledDataset> {
        match self {
            DatasetSpec::File { path } => {
                let text = fs::read_to_string(resolve_path(base_dir, path))?;
                LabeledDataset::from_csv(&text)
            }
            DatasetSpec::Ring {
                points,
                inner_radius,
                outer_radius,
                noise,
                seed,
            } => generate_ring_dataset(*points, *inner_radius, *outer_radius, *noise, *seed),
        }
    }
}

/// Grid of (alpha, eta, seed) cells overriding the base `sim` block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub alphas: Vec<f64>,
    pub etas: Vec<f64>,
    /// Seeds for the random initial state, one cell per grid point.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.etas.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidConfig("sweep grid must not be empty".into()));
        }
        if self
            .alphas
            .iter()
            .chain(&self.etas)
            .any(|v| *v <= 0.0 || !v.is_finite())
        {
            return Err(Error::InvalidConfig(
                "sweep step sizes must be positive and finite".into(),
            ));
        }
        Ok(())
    }

    /// Cells in deterministic grid order: alpha outer, eta, then seed.
    pub fn cells(&self) -> Vec<(f64, f64, u64)> {
        let mut cells = Vec::with_capacity(self.alphas.len() * self.etas.len() * self.seeds.len());
        for &a in &self.alphas {
            for &e in &self.etas {
                for &s in &self.seeds {
                    cells.push((a, e, s));
                }
            }
        }
        cells
    }
}

pub fn resolve_path(base_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base_dir.join(path)
    }
}

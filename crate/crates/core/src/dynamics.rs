//! The discrete gradient-tracking iteration and its continuous-time
//! reference flow.
//!
//! Each node holds a decision row `x_i` and a tracker row `y_i`. One step
//! consists of a consensus move on `x` plus the tracker correction, then a
//! consensus move on `y` plus the local gradient increment:
//!
//! ```text
//! x_i+ = x_i - eta * sum_j w_ij (x_i - x_j) - alpha * y_i
//! y_i+ = y_i - eta * sum_j a_ij (y_i - y_j) + grad f_i(x_i+) - grad f_i(x_i)
//! ```
//!
//! All x-updates are computed from step-k values before any y-update reads
//! a step-k+1 gradient (two-phase sweep). The disagreement sums are
//! accumulated edge by edge rather than through a Laplacian product so
//! that exact consensus states are exact fixed points in floating point.
//!
//! Coefficient conventions, which differ between the two entry points:
//! [`step`] takes the raw per-step tracker coefficient. [`run`] treats
//! `alpha` as the gain of the underlying continuous-time flow
//! `dx = -Lw x - alpha y` and applies its Euler discretization with
//! sampling step `eta`, so the per-step coefficient it feeds to the update
//! is `alpha * eta`. That makes the update map exactly `I + eta * M(alpha)`
//! from the spectral module and keeps one `alpha` meaningful across
//! different `eta`.
//!
//! Weight balance gives the iteration an exact conservation law:
//! `sum_i (y_i(k) - grad f_i(x_i(k)))` is constant in `k`. [`run`] tracks
//! the drift of that quantity and reports it in the summary.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::CostModel;
use crate::error::{Error, Result};
use crate::graphs::{SwitchingSchedule, WeightedDigraph};
use crate::spectral::{bounds_for_graph, StepSizeBounds, AUTO_BOUND_SAFETY};

/// Node states at one step: row `i` of `x` (resp. `y`) is node i's decision
/// (resp. tracker) vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub k: u64,
}

impl SimState {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "x is {}x{}, y is {}x{}",
                x.nrows(),
                x.ncols(),
                y.nrows(),
                y.ncols()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NumericFailure("state has non-finite entries".into()));
        }
        Ok(Self { x, y, k: 0 })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Node-average of the decision rows.
    pub fn x_mean(&self) -> DVector<f64> {
        node_average(&self.x)
    }
}

fn node_average(x: &DMatrix<f64>) -> DVector<f64> {
    let mut avg = DVector::zeros(x.ncols());
    for i in 0..x.nrows() {
        avg += x.row(i).transpose();
    }
    avg / x.nrows() as f64
}

fn node_grads(cost: &dyn CostModel, x: &DMatrix<f64>) -> Vec<DVector<f64>> {
    (0..x.nrows())
        .map(|i| cost.grad(i, &x.row(i).transpose()))
        .collect()
}

/// Edge-wise disagreement sum `sum_j l_ij (v_i - v_j)` for row `i`.
fn disagreement_row(layer: &DMatrix<f64>, v: &DMatrix<f64>, i: usize) -> RowDVector<f64> {
    let mut acc = RowDVector::zeros(v.ncols());
    for j in 0..v.nrows() {
        let weight = layer[(i, j)];
        if weight != 0.0 {
            acc += (v.row(i) - v.row(j)) * weight;
        }
    }
    acc
}

fn step_inner(
    state: &SimState,
    graph: &WeightedDigraph,
    cost: &dyn CostModel,
    alpha: f64,
    eta: f64,
    grads: &[DVector<f64>],
) -> Result<(SimState, Vec<DVector<f64>>)> {
    let n = state.n();
    let mut x_new = DMatrix::zeros(n, state.dim());
    for i in 0..n {
        let row = state.x.row(i) - disagreement_row(graph.w(), &state.x, i) * eta
            - state.y.row(i) * alpha;
        x_new.set_row(i, &row);
    }
    if x_new.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { step: state.k });
    }
    let grads_new = node_grads(cost, &x_new);
    let mut y_new = DMatrix::zeros(n, state.dim());
    for i in 0..n {
        let row = state.y.row(i) - disagreement_row(graph.a(), &state.y, i) * eta
            + (&grads_new[i] - &grads[i]).transpose();
        y_new.set_row(i, &row);
    }
    if y_new.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { step: state.k });
    }
    Ok((
        SimState {
            x: x_new,
            y: y_new,
            k: state.k + 1,
        },
        grads_new,
    ))
}

/// One two-phase update. `alpha` is the raw per-step tracker coefficient
/// (see the module docs for how [`run`] scales it).
pub fn step(
    state: &SimState,
    graph: &WeightedDigraph,
    cost: &dyn CostModel,
    alpha: f64,
    eta: f64,
) -> Result<SimState> {
    if graph.n() != state.n() {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} nodes, state has {}",
            graph.n(),
            state.n()
        )));
    }
    let grads = node_grads(cost, &state.x);
    step_inner(state, graph, cost, alpha, eta, &grads).map(|(s, _)| s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum YInitMode {
    Zero,
    /// `y_i(0) = grad f_i(x_i(0))`; makes the tracking identity
    /// `sum y_i(k) = sum grad f_i(x_i(k))` exact from the start.
    LocalGradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum XInit {
    /// I.i.d. uniform on [-1, 1] per entry.
    Random { seed: u64 },
    Explicit { rows: Vec<Vec<f64>> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundPolicy {
    /// Use `alpha` and `eta` exactly as configured.
    Manual,
    /// Derive both from the spectral bounds, taking the worst case over
    /// every topology the schedule can produce within the horizon.
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Gain of the tracker term in the continuous-time flow. Ignored under
    /// the auto bound policy.
    pub alpha: f64,
    /// Euler sampling step. Ignored under the auto bound policy.
    pub eta: f64,
    /// Horizon in steps.
    #[serde(rename = "T")]
    pub t: u64,
    pub y_init_mode: YInitMode,
    pub x_init: XInit,
    pub bound_policy: BoundPolicy,
    pub divergence_threshold: f64,
    pub record_stride: u64,
    /// Also attach per-node decision snapshots to recorded trace rows.
    pub record_states: bool,
    /// Residual level that counts as converged; `None` means 1e-6.
    pub tol_converge: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            eta: 0.0,
            t: 0,
            y_init_mode: YInitMode::LocalGradient,
            x_init: XInit::Random { seed: 0 },
            bound_policy: BoundPolicy::Manual,
            divergence_threshold: 1e12,
            record_stride: 1,
            record_states: false,
            tol_converge: None,
        }
    }
}

pub const DEFAULT_TOL_CONVERGE: f64 = 1e-6;

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::InvalidConfig("horizon T must be positive".into()));
        }
        if self.bound_policy == BoundPolicy::Manual {
            if self.alpha <= 0.0 || !self.alpha.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "alpha must be positive under manual bounds, got {}",
                    self.alpha
                )));
            }
            if self.eta <= 0.0 || !self.eta.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "eta must be positive under manual bounds, got {}",
                    self.eta
                )));
            }
        }
        if self.divergence_threshold <= 0.0 || self.divergence_threshold.is_nan() {
            return Err(Error::InvalidConfig(
                "divergence threshold must be positive".into(),
            ));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidConfig("record stride must be positive".into()));
        }
        if let Some(tol) = self.tol_converge {
            if tol <= 0.0 || !tol.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "convergence tolerance must be positive, got {tol}"
                )));
            }
        }
        Ok(())
    }

    pub fn tol_converge_or_default(&self) -> f64 {
        self.tol_converge.unwrap_or(DEFAULT_TOL_CONVERGE)
    }
}

/// One recorded point of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub k: u64,
    /// `F(x_mean) - F*`; absent when no optimum is supplied.
    pub residual: Option<f64>,
    /// `max_i ||x_i - x_mean||`.
    pub disagreement: f64,
    /// `||sum_i grad f_i(x_i)||`.
    pub grad_sum_norm: f64,
    /// `||sum_i y_i||`.
    pub y_sum_norm: f64,
    /// Per-node decision rows, when state recording is on.
    pub x: Option<DMatrix<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Converged,
    Diverged,
    TimedOut,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub verdict: Verdict,
    pub final_residual: Option<f64>,
    pub final_disagreement: f64,
    pub final_grad_sum_norm: f64,
    /// First recorded step whose convergence metric passed the tolerance.
    pub iters_to_tol: Option<u64>,
    pub steps_executed: u64,
    /// Continuous-time gain actually used.
    pub alpha_used: f64,
    /// Sampling step actually used.
    pub eta_used: f64,
    /// Per-step tracker coefficient, `alpha_used * eta_used`.
    pub alpha_step_used: f64,
    pub tol_converge: f64,
    /// Worst-case bounds over the schedule, when computable.
    pub bounds: Option<StepSizeBounds>,
    /// Max drift of `sum_i (y_i - grad f_i(x_i))` over the run.
    pub conservation_drift: f64,
    /// `1e-8 * (1 + max gradient row norm encountered)`.
    pub conservation_tolerance: f64,
    pub max_grad_norm: f64,
    /// Curvature cap the bounds were computed with.
    pub gamma_used: f64,
    /// Largest per-node Hessian norm seen at recorded steps.
    pub gamma_observed: f64,
    pub f_star: Option<f64>,
}

pub struct RunOutcome {
    pub trace: Vec<TraceRecord>,
    pub summary: RunSummary,
    pub final_state: SimState,
}

/// Metric row for an arbitrary state, gradients recomputed from scratch.
pub fn compute_metrics(state: &SimState, cost: &dyn CostModel, f_star: Option<f64>) -> TraceRecord {
    let grads = node_grads(cost, &state.x);
    metrics_from_grads(state, cost, f_star, &grads, false)
}

fn metrics_from_grads(
    state: &SimState,
    cost: &dyn CostModel,
    f_star: Option<f64>,
    grads: &[DVector<f64>],
    record_state: bool,
) -> TraceRecord {
    let mean = state.x_mean();
    let disagreement = (0..state.n())
        .map(|i| (state.x.row(i).transpose() - &mean).norm())
        .fold(0.0, f64::max);
    let mut grad_sum = DVector::zeros(state.dim());
    for g in grads {
        grad_sum += g;
    }
    let mut y_sum = DVector::zeros(state.dim());
    for i in 0..state.n() {
        y_sum += state.y.row(i).transpose();
    }
    TraceRecord {
        k: state.k,
        residual: f_star.map(|fs| cost.total_value(&mean) - fs),
        disagreement,
        grad_sum_norm: grad_sum.norm(),
        y_sum_norm: y_sum.norm(),
        x: record_state.then(|| state.x.clone()),
    }
}

fn init_state(config: &SimConfig, n: usize, m: usize, cost: &dyn CostModel) -> Result<SimState> {
    let x = match &config.x_init {
        XInit::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0))
        }
        XInit::Explicit { rows } => {
            if rows.len() != n || rows.iter().any(|r| r.len() != m) {
                return Err(Error::InvalidConfig(format!(
                    "explicit init must be {n} rows of length {m}"
                )));
            }
            DMatrix::from_fn(n, m, |i, j| rows[i][j])
        }
    };
    let y = match config.y_init_mode {
        YInitMode::Zero => DMatrix::zeros(n, m),
        YInitMode::LocalGradient => {
            let mut y = DMatrix::zeros(n, m);
            for i in 0..n {
                y.set_row(i, &cost.grad(i, &x.row(i).transpose()).transpose());
            }
            y
        }
    };
    SimState::new(x, y)
}

/// Bounds per schedule segment, keyed by the segment's first step.
/// Non-quadratic costs contribute `gamma * I` Hessian proxies.
pub fn segment_bounds(
    schedule: &SwitchingSchedule,
    cost: &dyn CostModel,
    horizon: u64,
) -> Result<Vec<(u64, StepSizeBounds)>> {
    let gamma = cost.gamma();
    let hessians = cost
        .constant_hessians()
        .unwrap_or_else(|| vec![DMatrix::identity(cost.dim(), cost.dim()) * gamma; cost.n_nodes()]);
    schedule
        .segment_starts(horizon)
        .into_iter()
        .map(|start| {
            let topo = schedule.topology_at(start)?;
            Ok((start, bounds_for_graph(&topo, &hessians, gamma)?))
        })
        .collect()
}

/// Worst-case bounds over every topology the schedule realizes within the
/// horizon: the field-wise aggregate of [`segment_bounds`].
pub fn schedule_bounds(
    schedule: &SwitchingSchedule,
    cost: &dyn CostModel,
    horizon: u64,
) -> Result<StepSizeBounds> {
    segment_bounds(schedule, cost, horizon)?
        .into_iter()
        .map(|(_, b)| b)
        .reduce(|a, b| a.component_min(&b))
        .ok_or_else(|| Error::InvalidConfig("schedule produced no segments".into()))
}

/// Executes the iteration over the schedule for `config.t` steps.
///
/// The tracker coefficient fed to each update is `alpha * eta` (Euler
/// discretization of the gain-`alpha` flow; see the module docs). Under
/// the auto bound policy `alpha` and `eta` are derived from the worst-case
/// spectral bounds with the [`AUTO_BOUND_SAFETY`] factor.
///
/// Divergence (non-finite state or `max |x|` past the threshold) ends the
/// run with a `Diverged` verdict and the trace collected so far; it is not
/// an error.
pub fn run(
    config: &SimConfig,
    schedule: &SwitchingSchedule,
    cost: &dyn CostModel,
    f_star: Option<f64>,
) -> Result<RunOutcome> {
    config.validate()?;
    let n = schedule.n();
    let m = cost.dim();
    if cost.n_nodes() != n {
        return Err(Error::DimensionMismatch(format!(
            "cost has {} nodes, schedule has {n}",
            cost.n_nodes()
        )));
    }

    let bounds = match schedule_bounds(schedule, cost, config.t) {
        Ok(b) => Some(b),
        Err(e) => {
            if config.bound_policy == BoundPolicy::Auto {
                return Err(e);
            }
            None
        }
    };
    let (alpha, eta) = match config.bound_policy {
        BoundPolicy::Manual => (config.alpha, config.eta),
        BoundPolicy::Auto => {
            let b = bounds.as_ref().expect("auto policy propagates bound errors");
            (
                AUTO_BOUND_SAFETY * b.alpha_max_spectral_gap,
                AUTO_BOUND_SAFETY * b.eta_max_row_stochastic.min(b.eta_max_operator_norm),
            )
        }
    };
    if alpha <= 0.0 || eta <= 0.0 || !alpha.is_finite() || !eta.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "resolved step sizes must be positive, got alpha {alpha}, eta {eta}"
        )));
    }
    let alpha_step = alpha * eta;
    let tol = config.tol_converge_or_default();

    let mut state = init_state(config, n, m, cost)?;
    let mut grads = node_grads(cost, &state.x);

    // Conservation reference: sum_i (y_i - grad f_i(x_i)) at k = 0.
    let conserved_ref = conserved_quantity(&state, &grads);
    let mut drift: f64 = 0.0;
    let mut max_grad_norm: f64 = grads.iter().map(|g| g.norm()).fold(0.0, f64::max);

    let constant_hessians = cost.constant_hessians();
    let mut gamma_observed: f64 = 0.0;
    let mut observe_gamma = |x: &DMatrix<f64>| {
        if let Some(hs) = &constant_hessians {
            if gamma_observed == 0.0 {
                gamma_observed = hs
                    .iter()
                    .map(crate::spectral::operator_norm)
                    .fold(0.0, f64::max);
            }
        } else {
            for i in 0..n {
                let h = cost.hessian(i, &x.row(i).transpose());
                gamma_observed = gamma_observed.max(crate::spectral::operator_norm(&h));
            }
        }
    };

    let mut segment_starts = schedule.segment_starts(config.t);
    segment_starts.reverse(); // pop() yields them in ascending order
    let mut topology = schedule.topology_at(0)?;

    let mut trace: Vec<TraceRecord> = Vec::new();
    let mut iters_to_tol: Option<u64> = None;
    let mut verdict: Option<Verdict> = None;

    for k in 0..=config.t {
        let record = metrics_from_grads(&state, cost, f_star, &grads, config.record_states);
        let metric = convergence_metric(&record);
        if iters_to_tol.is_none() && metric <= tol {
            iters_to_tol = Some(k);
        }
        if k % config.record_stride == 0 || k == config.t {
            observe_gamma(&state.x);
            trace.push(record);
        }
        drift = drift.max((conserved_quantity(&state, &grads) - &conserved_ref).norm());
        max_grad_norm = max_grad_norm.max(grads.iter().map(|g| g.norm()).fold(0.0, f64::max));

        if state.x.iter().map(|v| v.abs()).fold(0.0, f64::max) > config.divergence_threshold {
            verdict = Some(Verdict::Diverged);
            break;
        }
        if k == config.t {
            break;
        }

        if segment_starts.last().is_some_and(|s| *s <= k) {
            while segment_starts.last().is_some_and(|s| *s <= k) {
                segment_starts.pop();
            }
            topology = schedule.topology_at(k)?;
        }

        match step_inner(&state, &topology, cost, alpha_step, eta, &grads) {
            Ok((next, next_grads)) => {
                state = next;
                grads = next_grads;
            }
            Err(Error::Diverged { .. }) => {
                verdict = Some(Verdict::Diverged);
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let last = trace.last().ok_or(Error::EmptyTrace)?;
    let verdict = verdict.unwrap_or_else(|| {
        if convergence_metric(last) <= tol {
            Verdict::Converged
        } else {
            Verdict::TimedOut
        }
    });
    let summary = RunSummary {
        verdict,
        final_residual: last.residual,
        final_disagreement: last.disagreement,
        final_grad_sum_norm: last.grad_sum_norm,
        iters_to_tol,
        steps_executed: state.k,
        alpha_used: alpha,
        eta_used: eta,
        alpha_step_used: alpha_step,
        tol_converge: tol,
        bounds,
        conservation_drift: drift,
        conservation_tolerance: 1e-8 * (1.0 + max_grad_norm),
        max_grad_norm,
        gamma_used: cost.gamma(),
        gamma_observed,
        f_star,
    };
    Ok(RunOutcome {
        trace,
        summary,
        final_state: state,
    })
}

/// Residual when an optimum is known, otherwise the larger of disagreement
/// and gradient-sum norm (both vanish exactly at the solved consensus).
fn convergence_metric(record: &TraceRecord) -> f64 {
    match record.residual {
        Some(r) => r,
        None => record.disagreement.max(record.grad_sum_norm),
    }
}

fn conserved_quantity(state: &SimState, grads: &[DVector<f64>]) -> DVector<f64> {
    let mut v = DVector::zeros(state.dim());
    for (i, g) in grads.iter().enumerate() {
        v += state.y.row(i).transpose() - g;
    }
    v
}

/// One sample of the continuous-time reference trajectory.
#[derive(Clone, Debug)]
pub struct CtSample {
    pub t: f64,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

/// Integrates the continuous-time flow
///
/// ```text
/// dx_i = -sum_j w_ij (x_i - x_j) - alpha y_i
/// dy_i = -sum_j a_ij (y_i - y_j) + hess f_i(x_i) dx_i
/// ```
///
/// with the classical fourth-order Runge-Kutta scheme, as an independent
/// reference for the Euler iteration. The time-derivative of the local
/// gradient is realized exactly through the analytic Hessian. The schedule
/// is mapped onto time by `step_time_scale` (the `eta` of the discrete run
/// being cross-checked): the topology at time `t` is the one the discrete
/// run uses at step `floor(t / step_time_scale)`, frozen over each RK4
/// step. Samples are returned every `sample_stride` steps plus the final
/// point.
///
/// `dt` must not exceed 1e-3 times the worst-case row-stochastic step
/// bound of the schedule.
#[allow(clippy::too_many_arguments)]
pub fn ct_reference(
    x0: &DMatrix<f64>,
    y0: &DMatrix<f64>,
    schedule: &SwitchingSchedule,
    step_time_scale: f64,
    cost: &dyn CostModel,
    alpha: f64,
    dt: f64,
    horizon: f64,
    sample_stride: usize,
) -> Result<Vec<CtSample>> {
    if dt <= 0.0 || horizon <= 0.0 || dt.is_nan() || horizon.is_nan() || sample_stride == 0 {
        return Err(Error::InvalidConfig(
            "dt, horizon and sample stride must be positive".into(),
        ));
    }
    if step_time_scale <= 0.0 || step_time_scale.is_nan() {
        return Err(Error::InvalidConfig("step time scale must be positive".into()));
    }
    let steps = (horizon / dt).ceil() as u64;
    let horizon_steps = ((horizon / step_time_scale).ceil() as u64).max(1);
    let bounds = schedule_bounds(schedule, cost, horizon_steps)?;
    if dt > 1e-3 * bounds.eta_max_row_stochastic {
        return Err(Error::InvalidConfig(format!(
            "dt {dt} exceeds 1e-3 x the row-stochastic step bound {}",
            bounds.eta_max_row_stochastic
        )));
    }
    let state0 = SimState::new(x0.clone(), y0.clone())?;
    let n = state0.n();
    if cost.n_nodes() != n || schedule.n() != n {
        return Err(Error::DimensionMismatch(
            "cost, schedule and initial state disagree on the node count".into(),
        ));
    }

    let derivative = |x: &DMatrix<f64>, y: &DMatrix<f64>, topo: &WeightedDigraph| {
        let m = x.ncols();
        let mut dx = DMatrix::zeros(n, m);
        let mut dy = DMatrix::zeros(n, m);
        for i in 0..n {
            let dxi = -disagreement_row(topo.w(), x, i) - y.row(i) * alpha;
            dx.set_row(i, &dxi);
        }
        for i in 0..n {
            let h = cost.hessian(i, &x.row(i).transpose());
            let dyi = -disagreement_row(topo.a(), y, i) + (&h * dx.row(i).transpose()).transpose();
            dy.set_row(i, &dyi);
        }
        (dx, dy)
    };

    let mut x = state0.x;
    let mut y = state0.y;
    let mut samples = Vec::with_capacity(steps as usize / sample_stride + 2);
    let mut topology = schedule.topology_at(0)?;
    let mut topology_step = 0_u64;
    for k in 0..steps {
        let t = k as f64 * dt;
        if (k as usize).is_multiple_of(sample_stride) {
            samples.push(CtSample {
                t,
                x: x.clone(),
                y: y.clone(),
            });
        }
        let discrete_step = (t / step_time_scale) as u64;
        if discrete_step != topology_step || k == 0 {
            topology = schedule.topology_at(discrete_step)?;
            topology_step = discrete_step;
        }
        let h = dt;
        let (k1x, k1y) = derivative(&x, &y, &topology);
        let (k2x, k2y) = derivative(&(&x + &k1x * (h / 2.0)), &(&y + &k1y * (h / 2.0)), &topology);
        let (k3x, k3y) = derivative(&(&x + &k2x * (h / 2.0)), &(&y + &k2y * (h / 2.0)), &topology);
        let (k4x, k4y) = derivative(&(&x + &k3x * h), &(&y + &k3y * h), &topology);
        x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
        y += (k1y + k2y * 2.0 + k3y * 2.0 + k4y) * (h / 6.0);
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: k });
        }
    }
    samples.push(CtSample {
        t: steps as f64 * dt,
        x,
        y,
    });
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::QuadraticCost;
    use crate::graphs::{random_weight_balanced_digraph, SwitchingSignal};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quad_1d(centers: &[f64]) -> QuadraticCost {
        QuadraticCost::homogeneous(
            centers
                .iter()
                .map(|c| DVector::from_column_slice(&[*c]))
                .collect(),
        )
        .unwrap()
    }

    fn single_node_graph() -> WeightedDigraph {
        WeightedDigraph::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), 1e-9).unwrap()
    }

    fn pair_graph(weight: f64) -> WeightedDigraph {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, weight, weight, 0.0]);
        WeightedDigraph::new(w.clone(), w, 1e-9).unwrap()
    }

    #[test]
    fn consensus_with_zero_tracker_is_exactly_fixed() {
        let g = random_weight_balanced_digraph(5, 2, 3);
        let cost = quad_1d(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let x = DMatrix::from_element(5, 1, 5.0);
        let state = SimState::new(x, DMatrix::zeros(5, 1)).unwrap();
        let next = step(&state, &g, &cost, 0.3, 0.1).unwrap();
        assert_eq!(next.x, state.x);
        assert_eq!(next.y, state.y);
        assert_eq!(next.k, 1);
    }

    #[test]
    fn single_node_reduces_to_gradient_descent() {
        let g = single_node_graph();
        let cost = quad_1d(&[3.0]);
        let state = SimState::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, -2.0),
        )
        .unwrap();
        let next = step(&state, &g, &cost, 0.25, 0.7).unwrap();
        assert_eq!(next.x[(0, 0)], 1.5);
        // Tracker must read the gradient at the new point, not the old one.
        assert_eq!(next.y[(0, 0)], -1.5);
    }

    #[test]
    fn two_node_hand_evaluation() {
        let g = pair_graph(0.25);
        let cost = quad_1d(&[0.0, 2.0]);
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 2.0]);
        let y = DMatrix::zeros(2, 1);
        let state = SimState::new(x, y).unwrap();
        let next = step(&state, &g, &cost, 0.5, 0.1).unwrap();
        assert_relative_eq!(next.x[(0, 0)], 0.05, epsilon = 1e-15);
        assert_relative_eq!(next.x[(1, 0)], 1.95, epsilon = 1e-15);
        assert_relative_eq!(next.y[(0, 0)], 0.05, epsilon = 1e-15);
        assert_relative_eq!(next.y[(1, 0)], -0.05, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_step_reports_the_index() {
        let g = pair_graph(0.25);
        let cost = quad_1d(&[0.0, 2.0]);
        let mut state = SimState::new(
            DMatrix::from_column_slice(2, 1, &[1e308, -1e308]),
            DMatrix::from_column_slice(2, 1, &[1e308, 1e308]),
        )
        .unwrap();
        state.k = 7;
        let err = step(&state, &g, &cost, 2.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::Diverged { step: 7 }));
    }

    #[test]
    fn conservation_and_tracking_identity_hold() {
        let g = random_weight_balanced_digraph(5, 2, 11);
        let cost = quad_1d(&[1.0, -2.0, 0.5, 3.0, -1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(5, 1, |_, _| rng.gen_range(-1.0..1.0));
        let mut y = DMatrix::zeros(5, 1);
        for i in 0..5 {
            y[(i, 0)] = cost.grad(i, &x.row(i).transpose())[0];
        }
        let mut state = SimState::new(x, y).unwrap();
        for _ in 0..200 {
            state = step(&state, &g, &cost, 0.02, 0.5).unwrap();
            let grads = node_grads(&cost, &state.x);
            let tracked: f64 = (0..5).map(|i| state.y[(i, 0)] - grads[i][0]).sum();
            assert!(tracked.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_init_conserves_the_initial_offset() {
        let g = random_weight_balanced_digraph(4, 2, 12);
        let cost = quad_1d(&[1.0, -2.0, 0.5, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(4, 1, |_, _| rng.gen_range(-1.0..1.0));
        let offset: f64 = (0..4)
            .map(|i| -cost.grad(i, &x.row(i).transpose())[0])
            .sum();
        let mut state = SimState::new(x, DMatrix::zeros(4, 1)).unwrap();
        for _ in 0..100 {
            state = step(&state, &g, &cost, 0.02, 0.5).unwrap();
            let grads = node_grads(&cost, &state.x);
            let now: f64 = (0..4).map(|i| state.y[(i, 0)] - grads[i][0]).sum();
            assert_relative_eq!(now, offset, epsilon = 1e-12);
        }
    }

    #[test]
    fn step_commutes_with_node_relabeling() {
        let g = random_weight_balanced_digraph(4, 2, 21);
        let centers = [1.0, -2.0, 0.5, 3.0];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0));
        let y = DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0));
        let state = SimState::new(x.clone(), y.clone()).unwrap();

        // sigma maps old labels to new ones.
        let sigma = [2usize, 0, 3, 1];
        let permute_rows = |m: &DMatrix<f64>| {
            let mut out = m.clone();
            for (old, new) in sigma.iter().enumerate() {
                out.set_row(*new, &m.row(old));
            }
            out
        };
        let permute_layer = |l: &DMatrix<f64>| {
            DMatrix::from_fn(4, 4, |i, j| {
                let old_i = sigma.iter().position(|s| *s == i).unwrap();
                let old_j = sigma.iter().position(|s| *s == j).unwrap();
                l[(old_i, old_j)]
            })
        };
        let gp = WeightedDigraph::new(permute_layer(g.w()), permute_layer(g.a()), 1e-9).unwrap();
        let centers_p: Vec<f64> = (0..4)
            .map(|i| centers[sigma.iter().position(|s| *s == i).unwrap()])
            .collect();
        // Both costs use 2d copies of the scalar centers so the runs share
        // f_i up to relabeling.
        let quad_p = QuadraticCost::homogeneous(
            centers_p
                .iter()
                .map(|c| DVector::from_fn(2, |_, _| *c))
                .collect(),
        )
        .unwrap();
        let quad = QuadraticCost::homogeneous(
            centers
                .iter()
                .map(|c| DVector::from_fn(2, |_, _| *c))
                .collect(),
        )
        .unwrap();
        let next_base = step(&state, &g, &quad, 0.1, 0.3).unwrap();
        let state_p = SimState::new(permute_rows(&x), permute_rows(&y)).unwrap();
        let next_p = step(&state_p, &gp, &quad_p, 0.1, 0.3).unwrap();
        assert_relative_eq!(
            (permute_rows(&next_base.x) - &next_p.x).norm(),
            0.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            (permute_rows(&next_base.y) - &next_p.y).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn metrics_examples() {
        let cost = quad_1d(&[1.0, 3.0]);
        // Optimum x* = 2 replicated.
        let state = SimState::new(DMatrix::from_element(2, 1, 2.0), DMatrix::zeros(2, 1)).unwrap();
        let rec = compute_metrics(&state, &cost, Some(1.0));
        assert!(rec.residual.unwrap().abs() <= 1e-10);
        assert_eq!(rec.disagreement, 0.0);
        assert!(rec.grad_sum_norm <= 1e-8);

        // Each node at its own center: gradient sum vanishes, nodes do not
        // agree.
        let state = SimState::new(
            DMatrix::from_column_slice(2, 1, &[1.0, 3.0]),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        let rec = compute_metrics(&state, &cost, Some(1.0));
        assert_eq!(rec.grad_sum_norm, 0.0);
        assert!(rec.disagreement > 0.0);

        // Convexity keeps the residual nonnegative everywhere.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let state = SimState::new(
                DMatrix::from_fn(2, 1, |_, _| rng.gen_range(-10.0..10.0)),
                DMatrix::zeros(2, 1),
            )
            .unwrap();
            let rec = compute_metrics(&state, &cost, Some(1.0));
            assert!(rec.residual.unwrap() >= -1e-8 * 2.0);
        }
    }

    fn run_config(t: u64) -> SimConfig {
        SimConfig {
            t,
            bound_policy: BoundPolicy::Auto,
            x_init: XInit::Random { seed: 42 },
            ..SimConfig::default()
        }
    }

    #[test]
    fn quadratic_run_converges_under_auto_bounds() {
        let g = random_weight_balanced_digraph(5, 2, 30);
        let cost = quad_1d(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let schedule = SwitchingSchedule::constant(g);
        // Optimum of the pooled quadratic is the center mean.
        let out = run(&run_config(20_000), &schedule, &cost, Some(5.0)).unwrap();
        assert_eq!(out.summary.verdict, Verdict::Converged);
        assert!(out.summary.final_residual.unwrap() <= 1e-6);
        assert!(out.summary.iters_to_tol.is_some());
        for i in 0..5 {
            assert_relative_eq!(out.final_state.x[(i, 0)], 3.0, epsilon = 1e-4);
        }
        assert!(out.summary.conservation_drift <= out.summary.conservation_tolerance);
        let b = out.summary.bounds.unwrap();
        assert_relative_eq!(
            out.summary.alpha_used,
            AUTO_BOUND_SAFETY * b.alpha_max_spectral_gap
        );
        assert_relative_eq!(out.summary.alpha_step_used, out.summary.alpha_used * out.summary.eta_used);
    }

    #[test]
    fn oversized_gain_is_a_diverged_verdict_not_an_error() {
        let g = pair_graph(0.25);
        let cost = quad_1d(&[0.0, 2.0]);
        let config = SimConfig {
            alpha: 1e6,
            eta: 0.5,
            t: 2_000,
            ..SimConfig::default()
        };
        let out = run(&config, &SwitchingSchedule::constant(g), &cost, Some(1.0)).unwrap();
        assert_eq!(out.summary.verdict, Verdict::Diverged);
        assert!(!out.trace.is_empty());
        assert!(out.summary.steps_executed < 2_000);
    }

    #[test]
    fn missing_optimum_falls_back_to_stationarity_metrics() {
        let g = random_weight_balanced_digraph(4, 2, 31);
        let cost = quad_1d(&[1.0, 2.0, 3.0, 4.0]);
        let config = SimConfig {
            tol_converge: Some(1e-7),
            ..run_config(20_000)
        };
        let out = run(&config, &SwitchingSchedule::constant(g), &cost, None).unwrap();
        assert!(out.trace.iter().all(|r| r.residual.is_none()));
        assert_eq!(out.summary.verdict, Verdict::Converged);
        assert!(out.summary.final_disagreement <= 1e-7);
    }

    #[test]
    fn residual_tail_is_monotone_for_quadratics() {
        let g = random_weight_balanced_digraph(5, 3, 32);
        let cost = quad_1d(&[2.0, -1.0, 0.0, 1.0, 3.0]);
        let out = run(&run_config(6_000), &SwitchingSchedule::constant(g), &cost, Some(5.0))
            .unwrap();
        let residuals: Vec<f64> = out.trace.iter().map(|r| r.residual.unwrap()).collect();
        for k in 2_000..residuals.len() {
            assert!(
                residuals[k] <= residuals[k - 1_000] + 1e-12,
                "residual rose between {} and {k}",
                k - 1_000
            );
        }
    }

    #[test]
    fn switching_run_converges_when_every_snapshot_is_in_bounds() {
        let graphs: Vec<WeightedDigraph> = (0..3)
            .map(|s| random_weight_balanced_digraph(4, 2, 50 + s))
            .collect();
        let schedule =
            SwitchingSchedule::new(graphs, SwitchingSignal::Periodic { block: 50 }, Vec::new())
                .unwrap();
        let cost = quad_1d(&[1.0, 2.0, 3.0, 4.0]);
        let out = run(&run_config(20_000), &schedule, &cost, Some(2.5)).unwrap();
        assert_eq!(out.summary.verdict, Verdict::Converged);
    }

    #[test]
    fn recording_stride_and_state_snapshots() {
        let g = pair_graph(0.25);
        let cost = quad_1d(&[0.0, 2.0]);
        let config = SimConfig {
            alpha: 0.5,
            eta: 0.1,
            t: 10,
            record_stride: 4,
            record_states: true,
            ..SimConfig::default()
        };
        let out = run(&config, &SwitchingSchedule::constant(g), &cost, Some(1.0)).unwrap();
        let ks: Vec<u64> = out.trace.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![0, 4, 8, 10]);
        assert!(out.trace.iter().all(|r| r.x.is_some()));
    }

    #[test]
    fn ct_consensus_fixed_point_is_stationary() {
        let g = random_weight_balanced_digraph(3, 1, 60);
        let cost = quad_1d(&[1.0, 2.0, 3.0]);
        let x0 = DMatrix::from_element(3, 1, 2.0);
        let y0 = DMatrix::zeros(3, 1);
        let schedule = SwitchingSchedule::constant(g);
        let samples =
            ct_reference(&x0, &y0, &schedule, 1.0, &cost, 0.3, 1e-3, 0.5, 100).unwrap();
        let last = samples.last().unwrap();
        assert_eq!(last.x, x0);
        assert_eq!(last.y, y0);
    }

    #[test]
    fn ct_flow_reaches_the_center_mean() {
        let g = pair_graph(0.3);
        let cost = quad_1d(&[0.0, 2.0]);
        let x0 = DMatrix::from_column_slice(2, 1, &[0.5, -0.5]);
        let mut y0 = DMatrix::zeros(2, 1);
        for i in 0..2 {
            y0[(i, 0)] = cost.grad(i, &x0.row(i).transpose())[0];
        }
        let schedule = SwitchingSchedule::constant(g);
        let samples =
            ct_reference(&x0, &y0, &schedule, 1.0, &cost, 0.3, 2e-3, 60.0, 1000).unwrap();
        let last = samples.last().unwrap();
        assert_relative_eq!(last.x[(0, 0)], 1.0, epsilon = 1e-6);
        assert_relative_eq!(last.x[(1, 0)], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn euler_tracks_the_ct_reference() {
        let g = pair_graph(0.3);
        let cost = quad_1d(&[0.0, 2.0]);
        let eta = 1e-3;
        let alpha = 0.3;
        let x0 = DMatrix::from_column_slice(2, 1, &[0.5, -0.5]);
        let mut y0 = DMatrix::zeros(2, 1);
        for i in 0..2 {
            y0[(i, 0)] = cost.grad(i, &x0.row(i).transpose())[0];
        }
        let schedule = SwitchingSchedule::constant(g.clone());
        let horizon = 5.0;
        let steps = (horizon / eta) as usize;
        let samples =
            ct_reference(&x0, &y0, &schedule, eta, &cost, alpha, eta, horizon, 1).unwrap();
        let mut state = SimState::new(x0, y0).unwrap();
        let mut sup = 0.0_f64;
        for sample in samples.iter().take(steps) {
            sup = sup.max((&state.x - &sample.x).amax());
            state = step(&state, &g, &cost, alpha * eta, eta).unwrap();
        }
        assert!(sup <= 1e-2, "Euler drifted {sup} from the reference");
    }

    #[test]
    fn ct_rejects_coarse_dt() {
        let g = pair_graph(0.3);
        let cost = quad_1d(&[0.0, 2.0]);
        let schedule = SwitchingSchedule::constant(g);
        let x0 = DMatrix::zeros(2, 1);
        let y0 = DMatrix::zeros(2, 1);
        let err = ct_reference(&x0, &y0, &schedule, 1.0, &cost, 0.3, 0.1, 1.0, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn config_round_trips_and_validates() {
        let config = SimConfig {
            alpha: 1.0,
            eta: 0.001,
            t: 500,
            y_init_mode: YInitMode::Zero,
            x_init: XInit::Explicit {
                rows: vec![vec![0.1], vec![0.2]],
            },
            tol_converge: Some(1e-3),
            ..SimConfig::default()
        };
        let json = serde_json::to_string(&config).unwrap();
        assert!(json.contains("\"T\":500"));
        let back: SimConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config, back);

        let sparse: SimConfig =
            serde_json::from_str(r#"{"alpha": 0.5, "eta": 0.1, "T": 10}"#).unwrap();
        assert_eq!(sparse.y_init_mode, YInitMode::LocalGradient);
        assert_eq!(sparse.divergence_threshold, 1e12);
        sparse.validate().unwrap();

        assert!(serde_json::from_str::<SimConfig>(r#"{"alpa": 0.5}"#).is_err());
        assert!(SimConfig::default().validate().is_err());
        let auto = SimConfig {
            t: 10,
            bound_policy: BoundPolicy::Auto,
            ..SimConfig::default()
        };
        auto.validate().unwrap();
    }
}

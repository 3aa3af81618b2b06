//! Two-layer weighted digraphs, their Laplacians, and switching schedules.
//!
//! A [`WeightedDigraph`] carries one node set and two nonnegative weight
//! layers `w` and `a`: row `i` of a layer holds the weights node `i` applies
//! to its in-neighbors, so `w[(i, j)] > 0` means information flows from `j`
//! to `i`. Every layer accepted here is *weight-balanced* (each node's row
//! sum equals its column sum), has zero diagonal, row sums strictly below
//! one, and a strongly connected positive support. Those are exactly the
//! standing assumptions of the consensus and tracking iterations in
//! [`crate::dynamics`], and they are checked once at construction rather
//! than per step.
//!
//! Laplacians follow the sign convention that puts the weights off-diagonal:
//! `L[(i, j)] = w[(i, j)]` for `i != j` and `L[(i, i)] = -sum_j w[(i, j)]`,
//! so row sums are zero and all eigenvalues have nonpositive real part.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance for the row-sum/column-sum balance check.
pub const DEFAULT_BALANCE_TOL: f64 = 1e-9;

/// Row-sum cap applied by the random generator, leaving spectral margin
/// below the strict `< 1` requirement.
pub const MAX_ROW_SUM: f64 = 0.9;

/// A digraph with two validated weight layers sharing one node set.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedDigraph {
    n: usize,
    w: DMatrix<f64>,
    a: DMatrix<f64>,
}

impl WeightedDigraph {
    /// Validates both layers and builds the graph. See the module docs for
    /// the accepted invariants; violations come back as
    /// [`Error::InvalidLayer`].
    pub fn new(w: DMatrix<f64>, a: DMatrix<f64>, balance_tol: f64) -> Result<Self> {
        if w.nrows() != w.ncols() || a.nrows() != a.ncols() || w.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "layers must be square and equally sized, got {}x{} and {}x{}",
                w.nrows(),
                w.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        if w.nrows() == 0 {
            return Err(Error::InvalidLayer {
                layer: "w",
                reason: "empty node set".into(),
            });
        }
        validate_layer("w", &w, balance_tol)?;
        validate_layer("a", &a, balance_tol)?;
        Ok(Self { n: w.nrows(), w, a })
    }

    /// Number of nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Weight layer driving the decision-variable consensus term.
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Weight layer driving the tracker consensus term.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Copy of the graph with the `a` layer replaced by `w`.
    pub fn with_equal_layers(&self) -> Self {
        Self {
            n: self.n,
            w: self.w.clone(),
            a: self.w.clone(),
        }
    }

    /// Largest row sum across both layers (the Gershgorin radius of the
    /// associated Laplacians).
    pub fn max_row_sum(&self) -> f64 {
        let row_max = |m: &DMatrix<f64>| {
            (0..m.nrows())
                .map(|i| m.row(i).iter().sum::<f64>())
                .fold(0.0_f64, f64::max)
        };
        row_max(&self.w).max(row_max(&self.a))
    }
}

fn validate_layer(name: &'static str, m: &DMatrix<f64>, balance_tol: f64) -> Result<()> {
    let n = m.nrows();
    let fail = |reason: String| Error::InvalidLayer {
        layer: name,
        reason,
    };
    for i in 0..n {
        if m[(i, i)] != 0.0 {
            return Err(fail(format!("nonzero diagonal entry at node {i}")));
        }
        for j in 0..n {
            let v = m[(i, j)];
            if !v.is_finite() {
                return Err(fail(format!("non-finite weight at ({i}, {j})")));
            }
            if v < 0.0 {
                return Err(fail(format!("negative weight {v} at ({i}, {j})")));
            }
        }
        let row_sum: f64 = m.row(i).iter().sum();
        if row_sum >= 1.0 {
            return Err(fail(format!("row sum {row_sum} at node {i} is not < 1")));
        }
    }
    if !is_weight_balanced(m, balance_tol) {
        return Err(fail(format!(
            "row sums differ from column sums beyond tolerance {balance_tol:e}"
        )));
    }
    if !is_strongly_connected(m) {
        return Err(fail("positive support is not strongly connected".into()));
    }
    Ok(())
}

/// Checks `|row_sum(i) - col_sum(i)| <= tol` for every node.
pub fn is_weight_balanced(layer: &DMatrix<f64>, tol: f64) -> bool {
    let n = layer.nrows();
    (0..n).all(|i| {
        let row: f64 = layer.row(i).iter().sum();
        let col: f64 = layer.column(i).iter().sum();
        (row - col).abs() <= tol
    })
}

/// Strong connectivity of the positive support of `layer`.
///
/// Runs one forward and one backward breadth-first search from node 0; the
/// graph is strongly connected iff both reach every node.
pub fn is_strongly_connected(layer: &DMatrix<f64>) -> bool {
    let n = layer.nrows();
    if n == 0 {
        return false;
    }
    let reaches_all = |transpose: bool| {
        let mut seen = vec![false; n];
        let mut queue = vec![0_usize];
        seen[0] = true;
        while let Some(u) = queue.pop() {
            for v in 0..n {
                let weight = if transpose {
                    layer[(v, u)]
                } else {
                    layer[(u, v)]
                };
                if weight > 0.0 && !seen[v] {
                    seen[v] = true;
                    queue.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reaches_all(false) && reaches_all(true)
}

/// Laplacian of a single weight layer: weights off-diagonal, negated row
/// sums on the diagonal, so `L * 1 = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
}

impl Laplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest absolute diagonal entry, which bounds the Gershgorin disks.
    pub fn gershgorin_radius(&self) -> f64 {
        (0..self.n())
            .map(|i| self.matrix[(i, i)].abs())
            .fold(0.0_f64, f64::max)
    }
}

/// Builds the Laplacian of one layer. The layer must have nonnegative
/// entries and a zero diagonal; balance or connectivity are not required
/// here.
pub fn build_laplacian(layer: &DMatrix<f64>) -> Result<Laplacian> {
    if layer.nrows() != layer.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "layer must be square, got {}x{}",
            layer.nrows(),
            layer.ncols()
        )));
    }
    let n = layer.nrows();
    let mut m = layer.clone();
    for i in 0..n {
        if layer[(i, i)] != 0.0 {
            return Err(Error::InvalidLayer {
                layer: "laplacian input",
                reason: format!("nonzero diagonal entry at node {i}"),
            });
        }
        let mut row_sum = 0.0;
        for j in 0..n {
            let v = layer[(i, j)];
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidLayer {
                    layer: "laplacian input",
                    reason: format!("invalid weight {v} at ({i}, {j})"),
                });
            }
            row_sum += v;
        }
        m[(i, i)] = -row_sum;
    }
    Ok(Laplacian { matrix: m })
}

/// Random weight-balanced strongly connected digraph.
///
/// Each layer is the superposition of `cycle_count` random Hamiltonian
/// directed cycles, one weight per cycle, which makes every node's row and
/// column sums equal by construction. If the combined cycle weights exceed
/// [`MAX_ROW_SUM`] they are rescaled uniformly so every row sum stays at or
/// below it. The two layers are drawn independently from the same seeded
/// stream; identical seeds reproduce the graph bit for bit.
pub fn random_weight_balanced_digraph(n: usize, cycle_count: usize, seed: u64) -> WeightedDigraph {
    assert!(n >= 2, "need at least two nodes");
    assert!(cycle_count >= 1, "need at least one cycle");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = cycle_superposition(n, cycle_count, &mut rng);
    let a = cycle_superposition(n, cycle_count, &mut rng);
    WeightedDigraph::new(w, a, DEFAULT_BALANCE_TOL)
        .expect("cycle superposition satisfies every layer invariant")
}

fn cycle_superposition(n: usize, cycle_count: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut cycles = Vec::with_capacity(cycle_count);
    let mut total = 0.0;
    for _ in 0..cycle_count {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let weight = rng.gen_range(0.1..1.0);
        total += weight;
        cycles.push((order, weight));
    }
    let scale = if total > MAX_ROW_SUM {
        MAX_ROW_SUM / total
    } else {
        1.0
    };
    let mut m = DMatrix::zeros(n, n);
    for (order, weight) in cycles {
        for idx in 0..n {
            let from = order[idx];
            let to = order[(idx + 1) % n];
            m[(from, to)] += weight * scale;
        }
    }
    m
}

/// Deletes the symmetric link `{i, j}` from both layers.
///
/// Requires `w[(i,j)] == w[(j,i)] > 0` and likewise in `a`; errors with
/// [`Error::AsymmetricLink`] otherwise, and with [`Error::ConnectivityLost`]
/// if the deletion disconnects a layer. Symmetric deletion changes row and
/// column sums of nodes `i` and `j` by the same amount, so weight balance is
/// preserved without any redesign of the remaining weights.
pub fn remove_symmetric_link(g: &WeightedDigraph, i: usize, j: usize) -> Result<WeightedDigraph> {
    let n = g.n();
    if i >= n || j >= n || i == j {
        return Err(Error::AsymmetricLink { i, j });
    }
    let symmetric = |m: &DMatrix<f64>| m[(i, j)] > 0.0 && m[(i, j)] == m[(j, i)];
    if !symmetric(&g.w) || !symmetric(&g.a) {
        return Err(Error::AsymmetricLink { i, j });
    }
    let mut w = g.w.clone();
    let mut a = g.a.clone();
    for m in [&mut w, &mut a] {
        m[(i, j)] = 0.0;
        m[(j, i)] = 0.0;
    }
    if !is_strongly_connected(&w) || !is_strongly_connected(&a) {
        return Err(Error::ConnectivityLost { i, j });
    }
    WeightedDigraph::new(w, a, DEFAULT_BALANCE_TOL)
}

/// Maps step indices to snapshot indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SwitchingSignal {
    /// Always the same snapshot.
    Constant {
        #[serde(default)]
        index: usize,
    },
    /// Snapshot `floor(k / block) mod count`, wrapping over all snapshots.
    Periodic { block: u64 },
    /// Explicit breakpoints: entry `(step, index)` selects `index` from
    /// `step` until the next entry. Steps before the first entry, or at or
    /// past `end` when set, are undefined.
    Table {
        entries: Vec<(u64, usize)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        end: Option<u64>,
    },
}

impl SwitchingSignal {
    /// Snapshot index active at step `k` given `count` snapshots.
    pub fn index_at(&self, k: u64, count: usize) -> Result<usize> {
        let index = match self {
            SwitchingSignal::Constant { index } => *index,
            SwitchingSignal::Periodic { block } => {
                if *block == 0 {
                    return Err(Error::InvalidConfig("periodic block must be >= 1".into()));
                }
                usize::try_from(k / block).unwrap_or(usize::MAX) % count.max(1)
            }
            SwitchingSignal::Table { entries, end } => {
                if let Some(end) = end {
                    if k >= *end {
                        return Err(Error::ScheduleExhausted { step: k });
                    }
                }
                entries
                    .iter()
                    .take_while(|(step, _)| *step <= k)
                    .last()
                    .map(|(_, index)| *index)
                    .ok_or(Error::ScheduleExhausted { step: k })?
            }
        };
        if index >= count {
            return Err(Error::SnapshotOutOfRange {
                index,
                count,
            });
        }
        Ok(index)
    }

    /// Steps in `(0, horizon)` where the selected index may change.
    fn change_steps(&self, horizon: u64, out: &mut Vec<u64>) {
        match self {
            SwitchingSignal::Constant { .. } => {}
            SwitchingSignal::Periodic { block } => {
                if *block > 0 {
                    let mut k = *block;
                    while k < horizon {
                        out.push(k);
                        k += block;
                    }
                }
            }
            SwitchingSignal::Table { entries, .. } => {
                out.extend(
                    entries
                        .iter()
                        .map(|(step, _)| *step)
                        .filter(|s| *s > 0 && *s < horizon),
                );
            }
        }
    }
}

/// One scheduled topology mutation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyEvent {
    pub step: u64,
    pub kind: TopologyEventKind,
    /// Link endpoint for removals; target snapshot index for switches.
    pub i: usize,
    /// Link endpoint for removals; unused for switches.
    #[serde(default)]
    pub j: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyEventKind {
    /// Zero out the symmetric link `{i, j}` in both layers from `step` on.
    SymmetricLinkRemoval,
    /// Pin the selected snapshot to index `i` from `step` on, overriding
    /// the signal until a later switch event.
    SnapshotSwitch,
}

/// A finite set of snapshots plus the rule selecting one per step.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingSchedule {
    graphs: Vec<WeightedDigraph>,
    signal: SwitchingSignal,
    events: Vec<TopologyEvent>,
}

impl SwitchingSchedule {
    pub fn new(
        graphs: Vec<WeightedDigraph>,
        signal: SwitchingSignal,
        mut events: Vec<TopologyEvent>,
    ) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::InvalidConfig("schedule needs at least one snapshot".into()));
        }
        let n = graphs[0].n();
        if graphs.iter().any(|g| g.n() != n) {
            return Err(Error::DimensionMismatch(
                "all snapshots in a schedule must share the node count".into(),
            ));
        }
        if let SwitchingSignal::Table { entries, .. } = &signal {
            if entries.windows(2).any(|w| w[0].0 > w[1].0) {
                return Err(Error::InvalidConfig(
                    "table signal entries must be sorted by step".into(),
                ));
            }
        }
        events.sort_by_key(|e| e.step);
        for e in &events {
            if e.kind == TopologyEventKind::SnapshotSwitch && e.i >= graphs.len() {
                return Err(Error::SnapshotOutOfRange {
                    index: e.i,
                    count: graphs.len(),
                });
            }
        }
        Ok(Self {
            graphs,
            signal,
            events,
        })
    }

    /// Single static snapshot, no events.
    pub fn constant(graph: WeightedDigraph) -> Self {
        Self {
            graphs: vec![graph],
            signal: SwitchingSignal::Constant { index: 0 },
            events: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.graphs[0].n()
    }

    pub fn graphs(&self) -> &[WeightedDigraph] {
        &self.graphs
    }

    pub fn signal(&self) -> &SwitchingSignal {
        &self.signal
    }

    pub fn events(&self) -> &[TopologyEvent] {
        &self.events
    }

    /// Topology in force at step `k`: the snapshot the signal (or the last
    /// switch event) selects, with every removal event at steps `<= k`
    /// applied on top. Pure in `k`.
    pub fn topology_at(&self, k: u64) -> Result<WeightedDigraph> {
        let mut index = None;
        for e in self.events.iter().take_while(|e| e.step <= k) {
            if e.kind == TopologyEventKind::SnapshotSwitch {
                index = Some(e.i);
            }
        }
        let index = match index {
            Some(i) => i,
            None => self.signal.index_at(k, self.graphs.len())?,
        };
        let mut g = self.graphs[index].clone();
        for e in self.events.iter().take_while(|e| e.step <= k) {
            if e.kind == TopologyEventKind::SymmetricLinkRemoval {
                g = remove_symmetric_link(&g, e.i, e.j)?;
            }
        }
        Ok(g)
    }

    /// Segment boundaries over `[0, horizon)`: sorted unique steps (always
    /// including 0) at which the topology may change. Between consecutive
    /// boundaries `topology_at` is constant.
    pub fn segment_starts(&self, horizon: u64) -> Vec<u64> {
        let mut steps = vec![0_u64];
        self.signal.change_steps(horizon, &mut steps);
        steps.extend(
            self.events
                .iter()
                .map(|e| e.step)
                .filter(|s| *s > 0 && *s < horizon),
        );
        steps.sort_unstable();
        steps.dedup();
        steps
    }
}

/// Serialization shape for one snapshot: `{"n": .., "w": [[..]], "a": [[..]]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub w: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
}

impl GraphJson {
    pub fn from_graph(g: &WeightedDigraph) -> Self {
        let rows = |m: &DMatrix<f64>| {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        Self {
            n: g.n(),
            w: rows(g.w()),
            a: rows(g.a()),
        }
    }

    pub fn into_graph(self, balance_tol: f64) -> Result<WeightedDigraph> {
        let to_matrix = |rows: Vec<Vec<f64>>, n: usize| -> Result<DMatrix<f64>> {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::DimensionMismatch(format!(
                    "expected {n}x{n} weight rows"
                )));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
        };
        let n = self.n;
        let w = to_matrix(self.w, n)?;
        let a = to_matrix(self.a, n)?;
        WeightedDigraph::new(w, a, balance_tol)
    }
}

/// Serialization shape for a schedule file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleJson {
    pub graphs: Vec<GraphJson>,
    pub signal: SwitchingSignal,
    #[serde(default)]
    pub events: Vec<TopologyEvent>,
}

impl ScheduleJson {
    pub fn from_schedule(s: &SwitchingSchedule) -> Self {
        Self {
            graphs: s.graphs().iter().map(GraphJson::from_graph).collect(),
            signal: s.signal().clone(),
            events: s.events().to_vec(),
        }
    }

    pub fn into_schedule(self, balance_tol: f64) -> Result<SwitchingSchedule> {
        let graphs = self
            .graphs
            .into_iter()
            .map(|g| g.into_graph(balance_tol))
            .collect::<Result<Vec<_>>>()?;
        SwitchingSchedule::new(graphs, self.signal, self.events)
    }
}

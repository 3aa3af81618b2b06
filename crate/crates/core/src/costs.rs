//! Local cost models: node-separable objectives F(x) = sum_i f_i(x).
//!
//! Two families are provided. Quadratics have constant Hessians and a
//! closed-form optimum, which makes them the workhorse for spectrum and
//! convergence audits. The soft-margin classifier is the nonlinear stress
//! case: each node holds a slice of a labeled point cloud and fits a shared
//! separating surface through a quadratic feature lift, with hinge terms
//! smoothed by a softplus of sharpness `mu`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// A node-separable objective. Node `i` owns the term `f_i`; every node
/// shares the same decision dimension.
pub trait CostModel: Send + Sync {
    fn n_nodes(&self) -> usize;
    /// Decision-variable dimension `m`.
    fn dim(&self) -> usize;
    fn value(&self, node: usize, x: &DVector<f64>) -> f64;
    fn grad(&self, node: usize, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, node: usize, x: &DVector<f64>) -> DMatrix<f64>;
    /// Uniform curvature cap: an upper bound on `||hessian(i, x)||` over
    /// all nodes and all reachable points.
    fn gamma(&self) -> f64;
    /// For models whose Hessians do not depend on the point, the exact
    /// per-node blocks; `None` otherwise.
    fn constant_hessians(&self) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    /// F evaluated with every node at the same point.
    fn total_value(&self, x: &DVector<f64>) -> f64 {
        (0..self.n_nodes()).map(|i| self.value(i, x)).sum()
    }

    /// Gradient of F with every node at the same point.
    fn total_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        for i in 0..self.n_nodes() {
            g += self.grad(i, x);
        }
        g
    }
}

/// Per-node quadratics `f_i(x) = 0.5 (x - c_i)' Q_i (x - c_i)`.
#[derive(Clone, Debug)]
pub struct QuadraticCost {
    centers: Vec<DVector<f64>>,
    curvatures: Vec<DMatrix<f64>>,
}

impl QuadraticCost {
    pub fn new(centers: Vec<DVector<f64>>, curvatures: Vec<DMatrix<f64>>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidConfig("quadratic cost needs at least one node".into()));
        }
        if centers.len() != curvatures.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} centers vs {} curvature matrices",
                centers.len(),
                curvatures.len()
            )));
        }
        let m = centers[0].len();
        for (i, c) in centers.iter().enumerate() {
            if c.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "center {i} has dimension {}, expected {m}",
                    c.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("center {i} has non-finite entries")));
            }
        }
        for (i, q) in curvatures.iter().enumerate() {
            if q.nrows() != m || q.ncols() != m {
                return Err(Error::DimensionMismatch(format!(
                    "curvature {i} is {}x{}, expected {m}x{m}",
                    q.nrows(),
                    q.ncols()
                )));
            }
            if q.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("curvature {i} has non-finite entries")));
            }
            let asym = (q - q.transpose()).norm();
            if asym > 1e-10 * (1.0 + q.norm()) {
                return Err(Error::InvalidConfig(format!(
                    "curvature {i} is not symmetric (skew norm {asym})"
                )));
            }
            if q.clone().cholesky().is_none() {
                return Err(Error::InvalidConfig(format!(
                    "curvature {i} is not positive definite"
                )));
            }
        }
        Ok(Self { centers, curvatures })
    }

    /// Unit curvature at every node: `f_i(x) = 0.5 ||x - c_i||^2`.
    pub fn homogeneous(centers: Vec<DVector<f64>>) -> Result<Self> {
        let m = centers.first().map(|c| c.len()).unwrap_or(0);
        let curvatures = vec![DMatrix::identity(m, m); centers.len()];
        Self::new(centers, curvatures)
    }

    pub fn centers(&self) -> &[DVector<f64>] {
        &self.centers
    }

    pub fn curvatures(&self) -> &[DMatrix<f64>] {
        &self.curvatures
    }
}

impl CostModel for QuadraticCost {
    fn n_nodes(&self) -> usize {
        self.centers.len()
    }

    fn dim(&self) -> usize {
        self.centers[0].len()
    }

    fn value(&self, node: usize, x: &DVector<f64>) -> f64 {
        let d = x - &self.centers[node];
        0.5 * d.dot(&(&self.curvatures[node] * &d))
    }

    fn grad(&self, node: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.curvatures[node] * (x - &self.centers[node])
    }

    fn hessian(&self, node: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        self.curvatures[node].clone()
    }

    fn gamma(&self) -> f64 {
        self.curvatures
            .iter()
            .map(crate::spectral::operator_norm)
            .fold(0.0, f64::max)
    }

    fn constant_hessians(&self) -> Option<Vec<DMatrix<f64>>> {
        Some(self.curvatures.clone())
    }
}

/// Numerically safe `log(1 + exp(t)) / mu` evaluated at `t = mu * z`.
pub fn softplus(z: f64, mu: f64) -> f64 {
    z.max(0.0) + (-(mu * z).abs()).exp().ln_1p() / mu
}

/// Numerically safe logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Quadratic feature lift of a planar point; the induced linear separator
/// is an ellipse in the original coordinates.
pub fn feature_map(point: [f64; 2]) -> [f64; 3] {
    let [a, b] = point;
    [a * a, b * b, std::f64::consts::SQRT_2 * a * b]
}

/// Planar points with binary labels in {-1, +1}.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<f64>,
}

impl LabeledDataset {
    pub fn new(points: Vec<[f64; 2]>, labels: Vec<f64>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points vs {} labels",
                points.len(),
                labels.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::InvalidConfig("empty dataset".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::InvalidConfig(format!("point {i} has non-finite coordinates")));
            }
        }
        for (i, l) in labels.iter().enumerate() {
            if *l != 1.0 && *l != -1.0 {
                return Err(Error::InvalidConfig(format!(
                    "label {i} is {l}, expected -1 or +1"
                )));
            }
        }
        Ok(Self { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Serializes as `x1,x2,label` rows behind a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,x2,label\n");
        for (p, l) in self.points.iter().zip(&self.labels) {
            out.push_str(&format!("{},{},{}\n", p[0], p[1], *l as i64));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("x1")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::InvalidConfig(format!(
                    "dataset line {} has {} fields, expected 3",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidConfig(format!("dataset line {}: {e}", lineno + 1)))
            };
            points.push([parse(fields[0])?, parse(fields[1])?]);
            labels.push(parse(fields[2])?);
        }
        Self::new(points, labels)
    }
}

/// Two concentric classes: the positive class fills a disk of radius
/// `inner_radius` (area-uniform), the negative class sits on a circle of
/// radius `outer_radius`; both get Gaussian radial jitter of scale `noise`.
pub fn generate_ring_dataset(
    points: usize,
    inner_radius: f64,
    outer_radius: f64,
    noise: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if points < 2 {
        return Err(Error::InvalidConfig("need at least two points".into()));
    }
    if inner_radius <= 0.0 || inner_radius >= outer_radius || !outer_radius.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "radii must satisfy 0 < inner < outer, got {inner_radius} and {outer_radius}"
        )));
    }
    if noise < 0.0 || !noise.is_finite() {
        return Err(Error::InvalidConfig(format!("noise must be nonnegative, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).unwrap();
    let inner_count = points / 2 + points % 2;
    let mut pts = Vec::with_capacity(points);
    let mut labels = Vec::with_capacity(points);
    for k in 0..points {
        let inner = k < inner_count;
        let base = if inner {
            inner_radius * rng.gen_range(0.0..1.0_f64).sqrt()
        } else {
            outer_radius
        };
        let r = if noise > 0.0 { (base + jitter.sample(&mut rng)).max(0.0) } else { base };
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        pts.push([r * theta.cos(), r * theta.sin()]);
        labels.push(if inner { 1.0 } else { -1.0 });
    }
    LabeledDataset::new(pts, labels)
}

/// Assigns each node `round(fraction * N)` distinct sample indices, drawn
/// without replacement per node and returned sorted. Nodes overlap freely;
/// a fraction of 1 gives every node the full set.
pub fn partition_dataset(
    dataset: &LabeledDataset,
    n_nodes: usize,
    fraction: f64,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if n_nodes == 0 {
        return Err(Error::InvalidConfig("need at least one node".into()));
    }
    if fraction <= 0.0 || fraction > 1.0 || fraction.is_nan() {
        return Err(Error::InvalidConfig(format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let total = dataset.len();
    let per_node = ((fraction * total as f64).round() as usize).clamp(1, total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let mut indices: Vec<usize> = (0..total).collect();
        indices.shuffle(&mut rng);
        indices.truncate(per_node);
        indices.sort_unstable();
        assignments.push(indices);
    }
    Ok(assignments)
}

/// Distributed soft-margin classifier in the lifted feature space.
///
/// The shared decision variable is `x = [w; v]` with `w` the normal in
/// feature space and `v` the offset; a point is classified by the sign of
/// `w' phi(p) - v`. Node `i` pays
/// `f_i(x) = w'w + C * sum_j softplus_mu(1 - l_j (w' phi_j - v))`
/// over its assigned samples, plus an optional tiny ridge on `v` for
/// strict convexity in the offset.
pub struct SvmCost {
    // Per node: lifted feature with label folded in, d/dx of the margin
    // argument, i.e. [-l * phi; l].
    margin_grads: Vec<Vec<DVector<f64>>>,
    mu: f64,
    c: f64,
    nu_ridge: f64,
    gamma: f64,
}

impl SvmCost {
    pub const DIM: usize = 4;

    pub fn new(
        dataset: &LabeledDataset,
        assignments: &[Vec<usize>],
        mu: f64,
        c: f64,
        nu_ridge: f64,
    ) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::InvalidConfig("need at least one node".into()));
        }
        if mu <= 0.0 || !mu.is_finite() {
            return Err(Error::InvalidConfig(format!("mu must be positive, got {mu}")));
        }
        if c <= 0.0 || !c.is_finite() {
            return Err(Error::InvalidConfig(format!("C must be positive, got {c}")));
        }
        if nu_ridge < 0.0 || !nu_ridge.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "offset ridge must be nonnegative, got {nu_ridge}"
            )));
        }
        let mut margin_grads = Vec::with_capacity(assignments.len());
        let mut gamma: f64 = 0.0;
        for (i, idx) in assignments.iter().enumerate() {
            if idx.is_empty() {
                return Err(Error::InvalidConfig(format!("node {i} has no samples")));
            }
            let mut node = Vec::with_capacity(idx.len());
            let mut sq_sum = 0.0;
            for &j in idx {
                if j >= dataset.len() {
                    return Err(Error::InvalidConfig(format!(
                        "node {i} references sample {j}, dataset has {}",
                        dataset.len()
                    )));
                }
                let phi = feature_map(dataset.points[j]);
                let l = dataset.labels[j];
                let g = DVector::from_column_slice(&[-l * phi[0], -l * phi[1], -l * phi[2], l]);
                sq_sum += g.norm_squared();
                node.push(g);
            }
            // sigmoid curvature tops out at 1/4, so C*mu/4 * sum ||g||^2
            // dominates the hinge block of any reachable Hessian.
            gamma = gamma.max(2.0 + nu_ridge + c * mu / 4.0 * sq_sum);
            margin_grads.push(node);
        }
        Ok(Self {
            margin_grads,
            mu,
            c,
            nu_ridge,
            gamma,
        })
    }

    /// Splits a ring-style dataset across nodes and builds the cost.
    pub fn from_partition(
        dataset: &LabeledDataset,
        n_nodes: usize,
        fraction: f64,
        seed: u64,
        mu: f64,
        c: f64,
        nu_ridge: f64,
    ) -> Result<Self> {
        let assignments = partition_dataset(dataset, n_nodes, fraction, seed)?;
        Self::new(dataset, &assignments, mu, c, nu_ridge)
    }

    /// Margin argument `z = 1 - l (w' phi - v)` written through the cached
    /// per-sample gradient: `z = 1 + g' x`.
    fn margin(g: &DVector<f64>, x: &DVector<f64>) -> f64 {
        1.0 + g.dot(x)
    }
}

impl CostModel for SvmCost {
    fn n_nodes(&self) -> usize {
        self.margin_grads.len()
    }

    fn dim(&self) -> usize {
        Self::DIM
    }

    fn value(&self, node: usize, x: &DVector<f64>) -> f64 {
        let w_sq = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        let hinge: f64 = self.margin_grads[node]
            .iter()
            .map(|g| softplus(Self::margin(g, x), self.mu))
            .sum();
        w_sq + self.c * hinge + 0.5 * self.nu_ridge * x[3] * x[3]
    }

    fn grad(&self, node: usize, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(Self::DIM);
        out[0] = 2.0 * x[0];
        out[1] = 2.0 * x[1];
        out[2] = 2.0 * x[2];
        out[3] = self.nu_ridge * x[3];
        for g in &self.margin_grads[node] {
            let s = sigmoid(self.mu * Self::margin(g, x));
            out.axpy(self.c * s, g, 1.0);
        }
        out
    }

    fn hessian(&self, node: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(Self::DIM, Self::DIM);
        h[(0, 0)] = 2.0;
        h[(1, 1)] = 2.0;
        h[(2, 2)] = 2.0;
        h[(3, 3)] = self.nu_ridge;
        for g in &self.margin_grads[node] {
            let s = sigmoid(self.mu * Self::margin(g, x));
            let coeff = self.c * self.mu * s * (1.0 - s);
            h.syger(coeff, g, g, 1.0);
        }
        // syger fills the lower triangle; mirror it.
        for i in 0..Self::DIM {
            for j in (i + 1)..Self::DIM {
                h[(i, j)] = h[(j, i)];
            }
        }
        h
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Fraction of the dataset classified correctly by `x = [w; v]` under the
/// decision rule `sign(w' phi(p) - v)`.
pub fn classification_accuracy(dataset: &LabeledDataset, x: &DVector<f64>) -> f64 {
    let correct = dataset
        .points
        .iter()
        .zip(&dataset.labels)
        .filter(|(p, l)| {
            let phi = feature_map(**p);
            let score = x[0] * phi[0] + x[1] * phi[1] + x[2] * phi[2] - x[3];
            (score >= 0.0) == (**l > 0.0)
        })
        .count();
    correct as f64 / dataset.len() as f64
}

/// Empirical curvature cap: 1.05 times the largest per-node Hessian norm
/// over uniform probes of the box `[low, high]^m`.
pub fn estimate_gamma(cost: &dyn CostModel, low: f64, high: f64, probes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes.max(1) {
        let x = DVector::from_fn(cost.dim(), |_, _| rng.gen_range(low..high));
        for i in 0..cost.n_nodes() {
            worst = worst.max(crate::spectral::operator_norm(&cost.hessian(i, &x)));
        }
    }
    1.05 * worst
}

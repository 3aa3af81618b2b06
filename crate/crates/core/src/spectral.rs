//! Spectra and admissible step sizes for the stacked tracking system.
//!
//! The continuous-time iteration couples a decision variable and a tracker
//! through the block matrix
//!
//! ```text
//! M(alpha) = [ Lw (x) Im          -alpha*I        ]
//!            [ H (Lw (x) Im)      La (x) Im - alpha*H ]
//! ```
//!
//! where `Lw`, `La` are the layer Laplacians, `H` is the block-diagonal of
//! per-node Hessians and `(x)` is the Kronecker product. For a strongly
//! connected weight-balanced graph and small enough gain `alpha`, `M(alpha)`
//! keeps exactly `m` eigenvalues at zero (the consensus subspace) and moves
//! everything else into the open left half plane; the Euler map
//! `I + eta*M(alpha)` inherits the same picture relative to the unit circle
//! when `eta` is small enough. The bound functions below compute the
//! admissible ranges for `alpha`, `eta` and the product `alpha*eta`: two
//! come from spectral gaps, two from an optimal-matching-distance
//! perturbation argument, one from Gershgorin row sums, and one from
//! operator norms of the perturbation split `M = M0 + alpha*M1`.
//!
//! Conventions used throughout:
//! - operator norm = largest singular value;
//! - `tol_zero` for locating structural zero/unit eigenvalues defaults to
//!   `1e-7 * (1 + ||matrix||)`;
//! - for complex discrete spectra, "distance to the unit circle" uses the
//!   modulus; the real-part variant is reported alongside for comparison
//!   since the two differ on directed (non-symmetric) layers.

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{build_laplacian, Laplacian, WeightedDigraph};

/// Safety factor applied when an admissible-range endpoint is turned into a
/// concrete step size.
pub const AUTO_BOUND_SAFETY: f64 = 0.9;

/// Largest dimension accepted by [`eigenvalues`].
pub const MAX_EIGEN_DIM: usize = 2000;

/// Eigenvalues sorted by ascending real part, ties by ascending imaginary
/// part, plus an a-priori backward-error estimate for the whole set.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub values: Vec<Complex<f64>>,
    pub residual_bound: f64,
}

impl Spectrum {
    /// Count of eigenvalues with `|lambda| <= tol`.
    pub fn near_zero_count(&self, tol: f64) -> usize {
        self.values.iter().filter(|v| v.norm() <= tol).count()
    }

    /// Smallest modulus among eigenvalues with `|lambda| > tol`.
    pub fn min_nonzero_abs(&self, tol: f64) -> Option<f64> {
        self.values
            .iter()
            .map(|v| v.norm())
            .filter(|r| *r > tol)
            .min_by(f64::total_cmp)
    }

    /// Largest modulus over all eigenvalues.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Largest singular value.
pub fn operator_norm(matrix: &DMatrix<f64>) -> f64 {
    if matrix.is_empty() {
        return 0.0;
    }
    matrix.clone().singular_values().max()
}

/// Default tolerance for identifying structural zero (or unit) eigenvalues.
pub fn default_tol_zero(matrix: &DMatrix<f64>) -> f64 {
    1e-7 * (1.0 + operator_norm(matrix))
}

/// Dense eigenvalues via Hessenberg reduction plus the implicit QR sweep.
///
/// Backward stability contract: for each reported `lambda` there is a unit
/// vector `v` with `||M v - lambda v|| <= 1e-8 * (1 + ||M||)`; verified in
/// tests through [`eigen_residual`]. Failures of the iteration dump the
/// offending matrix to a temp file and error out instead of returning junk.
pub fn eigenvalues(matrix: &DMatrix<f64>) -> Result<Spectrum> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues need a square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let n = matrix.nrows();
    if n > MAX_EIGEN_DIM {
        return Err(Error::DimensionMismatch(format!(
            "dimension {n} exceeds the desk-scale cap {MAX_EIGEN_DIM}"
        )));
    }
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericFailure(
            "matrix with non-finite entries has no spectrum".into(),
        ));
    }
    if n == 0 {
        return Ok(Spectrum {
            values: Vec::new(),
            residual_bound: 0.0,
        });
    }
    let residual_bound = 100.0 * n as f64 * f64::EPSILON * (1.0 + matrix.norm());
    // Triangular inputs (the zero matrix in particular) can stall the QR
    // sweep, and their spectrum is free anyway.
    if let Some(values) = triangular_eigenvalues(matrix) {
        return Ok(Spectrum {
            values: sorted(values),
            residual_bound,
        });
    }
    let values = match schur_values(matrix) {
        Some(v) => v,
        None => {
            let dump = dump_matrix(matrix);
            return Err(Error::EigenNonConvergence {
                rows: n,
                cols: n,
                dump,
            });
        }
    };
    Ok(Spectrum {
        values: sorted(values),
        residual_bound,
    })
}

/// QR sweep with escalating rescue attempts. Nearly defective complex
/// pairs can stall the shift strategy, and a "successful" sweep can still
/// emit NaN eigenvalues; a much larger iteration budget or a random
/// orthogonal change of basis (spectrum-preserving, deterministic seed)
/// reliably unsticks both cases.
fn schur_values(matrix: &DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    let n = matrix.nrows();
    let base_niter = 200 + 100 * n;
    let finite_values = |s: Schur<f64, nalgebra::Dyn>| {
        let values: Vec<Complex<f64>> = s.complex_eigenvalues().iter().copied().collect();
        values
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
            .then_some(values)
    };
    if let Some(v) = Schur::try_new(matrix.clone(), f64::EPSILON, base_niter).and_then(finite_values)
    {
        return Some(v);
    }
    if let Some(v) =
        Schur::try_new(matrix.clone(), f64::EPSILON, 100 * base_niter).and_then(finite_values)
    {
        return Some(v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ n as u64);
    for _ in 0..3 {
        let gauss = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = gauss.qr().q();
        let rotated = q.transpose() * matrix * &q;
        if let Some(v) = Schur::try_new(rotated, f64::EPSILON, 100 * base_niter).and_then(finite_values)
        {
            return Some(v);
        }
    }
    None
}

fn sorted(mut values: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    values
}

fn triangular_eigenvalues(matrix: &DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    let n = matrix.nrows();
    let lower_zero = (0..n).all(|j| (j + 1..n).all(|i| matrix[(i, j)] == 0.0));
    let upper_zero = (0..n).all(|j| (j + 1..n).all(|i| matrix[(j, i)] == 0.0));
    (lower_zero || upper_zero)
        .then(|| (0..n).map(|i| Complex::new(matrix[(i, i)], 0.0)).collect())
}

fn dump_matrix(matrix: &DMatrix<f64>) -> std::path::PathBuf {
    let rows: Vec<Vec<f64>> = (0..matrix.nrows())
        .map(|i| matrix.row(i).iter().copied().collect())
        .collect();
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let path = std::env::temp_dir().join(format!("eigen-dump-{}-{stamp}.json", std::process::id()));
    let _ = std::fs::write(&path, serde_json::to_vec(&rows).unwrap_or_default());
    path
}

/// Exact backward error of one reported eigenvalue: the smallest singular
/// value of `M - lambda I`, i.e. `min_{||v||=1} ||M v - lambda v||`.
pub fn eigen_residual(matrix: &DMatrix<f64>, lambda: Complex<f64>) -> f64 {
    let mut shifted = matrix.map(|x| Complex::new(x, 0.0));
    for i in 0..matrix.nrows() {
        shifted[(i, i)] -= lambda;
    }
    shifted.singular_values().min()
}

/// True when every eigenvalue with `|Im| > tol` can be matched to a distinct
/// conjugate partner within `tol`.
pub fn conjugate_pairs_ok(spectrum: &Spectrum, tol: f64) -> bool {
    let mut used = vec![false; spectrum.values.len()];
    for (i, v) in spectrum.values.iter().enumerate() {
        if used[i] || v.im.abs() <= tol {
            continue;
        }
        let partner = spectrum.values.iter().enumerate().find(|(j, u)| {
            !used[*j] && *j != i && (u.conj() - v).norm() <= tol
        });
        match partner {
            Some((j, _)) => {
                used[i] = true;
                used[j] = true;
            }
            None => return false,
        }
    }
    true
}

/// Smallest `|Re lambda|` over the non-structural eigenvalues of a balanced
/// strongly connected Laplacian.
///
/// Exactly one eigenvalue must sit within `tol_zero` of the origin; more
/// indicate a disconnected support, none (on a nonzero matrix) indicate a
/// degenerate input.
pub fn lambda2_abs_real(laplacian: &Laplacian, tol_zero: f64) -> Result<f64> {
    let spectrum = eigenvalues(laplacian.matrix())?;
    let near_zero = spectrum.near_zero_count(tol_zero);
    if near_zero == spectrum.values.len() {
        return Err(Error::DegenerateSpectrum(
            "all eigenvalues are within tol_zero of the origin".into(),
        ));
    }
    if near_zero != 1 {
        return Err(Error::NotStronglyConnected {
            near_zero,
            tol: tol_zero,
        });
    }
    let min_abs_re = spectrum
        .values
        .iter()
        .filter(|v| v.norm() > tol_zero)
        .map(|v| v.re.abs())
        .min_by(|a, b| a.partial_cmp(b).unwrap())
        .expect("at least one eigenvalue away from the origin");
    Ok(min_abs_re)
}

/// Gain range from the spectral gaps of the two layers:
/// `min{|Re lambda2(Lw)|, |Re lambda2(La)|} / gamma`.
pub fn alpha_bound_spectral_gap(lw: &Laplacian, la: &Laplacian, gamma: f64) -> Result<f64> {
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(Error::NumericFailure(format!(
            "gamma must be positive and finite, got {gamma}"
        )));
    }
    let l2w = lambda2_abs_real(lw, default_tol_zero(lw.matrix()))?;
    let l2a = lambda2_abs_real(la, default_tol_zero(la.matrix()))?;
    Ok(l2w.min(l2a) / gamma)
}

/// Gain range from the optimal-matching-distance perturbation bound on the
/// spectrum of `M0`:
/// `lam_min^(nm) / (4^(nm) * (2*lam_max + lam_min)^(nm-1) * max{1, gamma})`
/// with `lam_min` the smallest nonzero modulus and `lam_max` the largest.
pub fn alpha_bound_matching_distance(
    m0_spectrum: &Spectrum,
    n: usize,
    m: usize,
    gamma: f64,
    tol_zero: f64,
) -> Result<f64> {
    let lam_min = m0_spectrum.min_nonzero_abs(tol_zero).ok_or_else(|| {
        Error::DegenerateSpectrum("spectrum has no eigenvalue away from the origin".into())
    })?;
    let lam_max = m0_spectrum.max_abs();
    let nm = (n * m) as i32;
    let bound = lam_min.powi(nm)
        / (4.0_f64.powi(nm) * (2.0 * lam_max + lam_min).powi(nm - 1) * gamma.max(1.0));
    Ok(bound)
}

/// Step range that keeps `I + eta*L` row-stochastic and nonnegative:
/// `1 / max{radius(Lw), radius(La)}` with the Gershgorin radius
/// `max_i |L_ii|`.
pub fn eta_bound_row_stochastic(lw: &Laplacian, la: &Laplacian) -> Result<f64> {
    let radius = lw.gershgorin_radius().max(la.gershgorin_radius());
    if radius <= 0.0 {
        return Err(Error::DegenerateSpectrum(
            "both layers have zero Gershgorin radius".into(),
        ));
    }
    Ok(1.0 / radius)
}

/// Gain-times-step range from the unit-circle gap of the consensus maps
/// `I + eta*L`, in both the modulus and the real-part reading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitCircleGapBound {
    /// `min{1 - |lambda|_max(Pw), 1 - |lambda|_max(Pa)} / gamma`.
    pub modulus: f64,
    /// Same with `max Re lambda` in place of the modulus.
    pub real_part: f64,
}

/// Computes [`UnitCircleGapBound`] for `Pw = I + eta*Lw`, `Pa = I + eta*La`.
///
/// `eta` must lie inside the row-stochastic range so each map has a single
/// structural eigenvalue at 1; that eigenvalue is excluded and the gap is
/// measured to the largest remaining one.
pub fn alpha_eta_bound_unit_circle_gap(
    lw: &Laplacian,
    la: &Laplacian,
    eta: f64,
    gamma: f64,
    boundary_tol: f64,
) -> Result<UnitCircleGapBound> {
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(Error::NumericFailure(format!(
            "gamma must be positive and finite, got {gamma}"
        )));
    }
    let gaps = |lap: &Laplacian| -> Result<(f64, f64)> {
        let n = lap.n();
        let p = DMatrix::identity(n, n) + lap.matrix() * eta;
        let spectrum = eigenvalues(&p)?;
        let boundary = spectrum
            .values
            .iter()
            .filter(|v| v.norm() > 1.0 - boundary_tol)
            .count();
        if boundary != 1 {
            return Err(Error::DegenerateSpectrum(format!(
                "expected one structural unit eigenvalue, found {boundary} near the circle \
                 (eta outside the row-stochastic range, or support not strongly connected?)"
            )));
        }
        let interior: Vec<&Complex<f64>> = spectrum
            .values
            .iter()
            .filter(|v| v.norm() <= 1.0 - boundary_tol)
            .collect();
        if interior.is_empty() {
            return Err(Error::DegenerateSpectrum(
                "no interior eigenvalues to measure the circle gap against".into(),
            ));
        }
        let max_mod = interior.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let max_re = interior
            .iter()
            .map(|v| v.re)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((1.0 - max_mod, 1.0 - max_re))
    };
    let (w_mod, w_re) = gaps(lw)?;
    let (a_mod, a_re) = gaps(la)?;
    Ok(UnitCircleGapBound {
        modulus: w_mod.min(a_mod) / gamma,
        real_part: w_re.min(a_re) / gamma,
    })
}

/// Gain-times-step range from the matching-distance bound applied to the
/// discrete base map `I + eta*M0`. The `2m` structural unit eigenvalues
/// are excluded; `lam_max` is the largest remaining modulus.
pub fn alpha_eta_bound_matching_distance(
    md0_spectrum: &Spectrum,
    n: usize,
    m: usize,
    gamma: f64,
    boundary_tol: f64,
) -> Result<f64> {
    let boundary = md0_spectrum
        .values
        .iter()
        .filter(|v| v.norm() > 1.0 - boundary_tol)
        .count();
    if boundary != 2 * m {
        return Err(Error::DegenerateSpectrum(format!(
            "expected {} structural unit eigenvalues in the base map, found {boundary}",
            2 * m
        )));
    }
    let lam_max = md0_spectrum
        .values
        .iter()
        .map(|v| v.norm())
        .filter(|r| *r <= 1.0 - boundary_tol)
        .fold(0.0, f64::max);
    alpha_eta_bound_matching_distance_at(lam_max, n, m, gamma)
}

/// Direct evaluation of the discrete matching-distance bound at a given
/// interior `lam_max`: `(1 - lam_max)^(nm) / (4^(nm) * (3 - lam_max)^(nm-1)
/// * max{1, gamma})`.
pub fn alpha_eta_bound_matching_distance_at(
    lam_max: f64,
    n: usize,
    m: usize,
    gamma: f64,
) -> Result<f64> {
    if lam_max >= 1.0 {
        return Err(Error::DegenerateSpectrum(format!(
            "interior eigenvalue modulus {lam_max} is not strictly inside the unit circle"
        )));
    }
    let nm = (n * m) as i32;
    Ok((1.0 - lam_max).powi(nm)
        / (4.0_f64.powi(nm) * (3.0 - lam_max).powi(nm - 1) * gamma.max(1.0)))
}

/// Step range from operator norms of the perturbation split `M = M0 +
/// alpha*M1`:
/// `1 / ( max{w_radius, a_radius} + 2 (||M0|| + ||M(alpha)||)^(1 - 1/(2mn))
/// * ||alpha*M1||^(1/(2mn)) )`.
///
/// At `alpha = 0` the perturbation term vanishes and the value reduces to
/// the row-stochastic bound.
#[allow(clippy::too_many_arguments)]
pub fn eta_bound_operator_norm(
    m0: &DMatrix<f64>,
    m_alpha: &DMatrix<f64>,
    m1: &DMatrix<f64>,
    alpha: f64,
    n: usize,
    m: usize,
    w_radius: f64,
    a_radius: f64,
) -> f64 {
    let p = 2.0 * (m * n) as f64;
    let norm_sum = operator_norm(m0) + operator_norm(m_alpha);
    let perturbation = alpha * operator_norm(m1);
    1.0 / (w_radius.max(a_radius)
        + 2.0 * norm_sum.powf(1.0 - 1.0 / p) * perturbation.powf(1.0 / p))
}

/// The stacked `2nm x 2nm` system matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrix {
    n: usize,
    m: usize,
    alpha: f64,
    matrix: DMatrix<f64>,
}

impl SystemMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Euler map `I + eta * M(alpha)`.
    pub fn discrete(&self, eta: f64) -> DMatrix<f64> {
        let d = self.matrix.nrows();
        DMatrix::identity(d, d) + &self.matrix * eta
    }
}

fn block_diagonal(hessians: &[DMatrix<f64>], m: usize) -> DMatrix<f64> {
    let n = hessians.len();
    let mut h = DMatrix::zeros(n * m, n * m);
    for (i, hi) in hessians.iter().enumerate() {
        h.view_mut((i * m, i * m), (m, m)).copy_from(hi);
    }
    h
}

/// Assembles `M(alpha)` from the layer Laplacians and per-node Hessian
/// blocks. `hessians` holds one symmetric `m x m` block per node.
pub fn build_system_matrix(
    lw: &Laplacian,
    la: &Laplacian,
    hessians: &[DMatrix<f64>],
    alpha: f64,
) -> Result<SystemMatrix> {
    let n = lw.n();
    if la.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "layer Laplacians disagree on node count: {} vs {}",
            n,
            la.n()
        )));
    }
    if hessians.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "need one Hessian block per node: got {} for {n} nodes",
            hessians.len()
        )));
    }
    let m = hessians
        .first()
        .map(|h| h.nrows())
        .filter(|m| *m > 0)
        .ok_or_else(|| Error::DimensionMismatch("empty Hessian block list".into()))?;
    if hessians.iter().any(|h| h.nrows() != m || h.ncols() != m) {
        return Err(Error::DimensionMismatch(format!(
            "all Hessian blocks must be {m}x{m}"
        )));
    }
    let nm = n * m;
    let eye_m = DMatrix::identity(m, m);
    let kron_w = lw.matrix().kronecker(&eye_m);
    let kron_a = la.matrix().kronecker(&eye_m);
    let h = block_diagonal(hessians, m);
    let mut matrix = DMatrix::zeros(2 * nm, 2 * nm);
    matrix.view_mut((0, 0), (nm, nm)).copy_from(&kron_w);
    matrix
        .view_mut((0, nm), (nm, nm))
        .copy_from(&(DMatrix::identity(nm, nm) * -alpha));
    matrix.view_mut((nm, 0), (nm, nm)).copy_from(&(&h * &kron_w));
    matrix
        .view_mut((nm, nm), (nm, nm))
        .copy_from(&(kron_a - &h * alpha));
    Ok(SystemMatrix {
        n,
        m,
        alpha,
        matrix,
    })
}

/// The perturbation block `M1 = [[0, -I], [0, -H]]`, so that
/// `M(alpha) = M0 + alpha * M1`.
pub fn build_perturbation_matrix(hessians: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = hessians.len();
    let m = hessians.first().map(|h| h.nrows()).unwrap_or(0);
    let nm = n * m;
    let h = block_diagonal(hessians, m);
    let mut matrix = DMatrix::zeros(2 * nm, 2 * nm);
    matrix
        .view_mut((0, nm), (nm, nm))
        .copy_from(&(DMatrix::identity(nm, nm) * -1.0));
    matrix.view_mut((nm, nm), (nm, nm)).copy_from(&(-h));
    matrix
}

/// Outcome of a structural spectrum check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterCheck {
    /// Eigenvalues found in the structural cluster (near 0, resp. near 1).
    pub cluster_size: usize,
    /// Cluster size required for a pass (the per-node dimension `m`).
    pub expected: usize,
    /// Max real part (continuous) or max modulus (discrete) of the rest.
    pub rest_extremum: f64,
    pub pass: bool,
}

/// Continuous-time structure: `M(alpha)` must keep exactly `m` eigenvalues
/// within `tol_zero` of the origin and the rest strictly in the left half
/// plane.
pub fn check_zero_cluster(system: &SystemMatrix, tol_zero: Option<f64>) -> Result<ClusterCheck> {
    let tol = tol_zero.unwrap_or_else(|| default_tol_zero(system.matrix()));
    let spectrum = eigenvalues(system.matrix())?;
    let cluster_size = spectrum.near_zero_count(tol);
    let rest_extremum = spectrum
        .values
        .iter()
        .filter(|v| v.norm() > tol)
        .map(|v| v.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let expected = system.m();
    Ok(ClusterCheck {
        cluster_size,
        expected,
        rest_extremum,
        pass: cluster_size == expected && rest_extremum < 0.0,
    })
}

/// Discrete-time structure: `I + eta*M(alpha)` must keep exactly `m`
/// eigenvalues within `tol_one` of the point 1 and the rest at modulus
/// below `1 - margin`.
pub fn check_unit_cluster(
    system: &SystemMatrix,
    eta: f64,
    tol_one: f64,
    margin: f64,
) -> Result<ClusterCheck> {
    let discrete = system.discrete(eta);
    let spectrum = eigenvalues(&discrete)?;
    let one = Complex::new(1.0, 0.0);
    let cluster_size = spectrum
        .values
        .iter()
        .filter(|v| (*v - one).norm() <= tol_one)
        .count();
    let rest_extremum = spectrum
        .values
        .iter()
        .filter(|v| (*v - one).norm() > tol_one)
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let expected = system.m();
    Ok(ClusterCheck {
        cluster_size,
        expected,
        rest_extremum,
        pass: cluster_size == expected && rest_extremum < 1.0 - margin,
    })
}

/// Every admissible-range endpoint for one topology, at one `gamma`.
///
/// The two coupled bounds (`eta` by operator norm, `alpha*eta` by circle
/// gaps) need a concrete gain resp. step to evaluate at; those are derived
/// from the other bounds with the [`AUTO_BOUND_SAFETY`] factor and recorded
/// in `alpha_for_eta` / `eta_for_alpha_eta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizeBounds {
    pub lambda2_w: f64,
    pub lambda2_a: f64,
    pub gamma_used: f64,
    pub alpha_max_spectral_gap: f64,
    pub alpha_max_matching_distance: f64,
    pub eta_max_row_stochastic: f64,
    pub eta_max_operator_norm: f64,
    pub alpha_eta_max_unit_circle_gap: f64,
    pub alpha_eta_max_unit_circle_gap_real_part: f64,
    pub alpha_eta_max_matching_distance: f64,
    pub alpha_for_eta: f64,
    pub eta_for_alpha_eta: f64,
}

impl StepSizeBounds {
    /// Field-wise minimum, used to aggregate over schedule snapshots.
    pub fn component_min(&self, other: &Self) -> Self {
        Self {
            lambda2_w: self.lambda2_w.min(other.lambda2_w),
            lambda2_a: self.lambda2_a.min(other.lambda2_a),
            gamma_used: self.gamma_used.max(other.gamma_used),
            alpha_max_spectral_gap: self
                .alpha_max_spectral_gap
                .min(other.alpha_max_spectral_gap),
            alpha_max_matching_distance: self
                .alpha_max_matching_distance
                .min(other.alpha_max_matching_distance),
            eta_max_row_stochastic: self
                .eta_max_row_stochastic
                .min(other.eta_max_row_stochastic),
            eta_max_operator_norm: self.eta_max_operator_norm.min(other.eta_max_operator_norm),
            alpha_eta_max_unit_circle_gap: self
                .alpha_eta_max_unit_circle_gap
                .min(other.alpha_eta_max_unit_circle_gap),
            alpha_eta_max_unit_circle_gap_real_part: self
                .alpha_eta_max_unit_circle_gap_real_part
                .min(other.alpha_eta_max_unit_circle_gap_real_part),
            alpha_eta_max_matching_distance: self
                .alpha_eta_max_matching_distance
                .min(other.alpha_eta_max_matching_distance),
            alpha_for_eta: self.alpha_for_eta.min(other.alpha_for_eta),
            eta_for_alpha_eta: self.eta_for_alpha_eta.min(other.eta_for_alpha_eta),
        }
    }
}

/// Computes every bound for one topology given per-node Hessian blocks and
/// the curvature cap `gamma`.
pub fn bounds_for_graph(
    graph: &WeightedDigraph,
    hessians: &[DMatrix<f64>],
    gamma: f64,
) -> Result<StepSizeBounds> {
    let lw = build_laplacian(graph.w())?;
    let la = build_laplacian(graph.a())?;
    let n = graph.n();
    let m = hessians
        .first()
        .map(|h| h.nrows())
        .ok_or_else(|| Error::DimensionMismatch("empty Hessian block list".into()))?;

    let lambda2_w = lambda2_abs_real(&lw, default_tol_zero(lw.matrix()))?;
    let lambda2_a = lambda2_abs_real(&la, default_tol_zero(la.matrix()))?;
    let alpha_max_spectral_gap = lambda2_w.min(lambda2_a) / gamma;

    let m0 = build_system_matrix(&lw, &la, hessians, 0.0)?;
    let m0_spectrum = eigenvalues(m0.matrix())?;
    let alpha_max_matching_distance = alpha_bound_matching_distance(
        &m0_spectrum,
        n,
        m,
        gamma,
        default_tol_zero(m0.matrix()),
    )?;

    let eta_max_row_stochastic = eta_bound_row_stochastic(&lw, &la)?;

    let alpha_for_eta = AUTO_BOUND_SAFETY * alpha_max_spectral_gap;
    let m_alpha = build_system_matrix(&lw, &la, hessians, alpha_for_eta)?;
    let m1 = build_perturbation_matrix(hessians);
    let eta_max_operator_norm = eta_bound_operator_norm(
        m0.matrix(),
        m_alpha.matrix(),
        &m1,
        alpha_for_eta,
        n,
        m,
        lw.gershgorin_radius(),
        la.gershgorin_radius(),
    );

    let eta_for_alpha_eta =
        AUTO_BOUND_SAFETY * eta_max_row_stochastic.min(eta_max_operator_norm);
    let gap = alpha_eta_bound_unit_circle_gap(&lw, &la, eta_for_alpha_eta, gamma, 1e-9)?;
    let md0_spectrum = eigenvalues(&m0.discrete(eta_for_alpha_eta))?;
    let alpha_eta_max_matching_distance =
        alpha_eta_bound_matching_distance(&md0_spectrum, n, m, gamma, 1e-9)?;

    Ok(StepSizeBounds {
        lambda2_w,
        lambda2_a,
        gamma_used: gamma,
        alpha_max_spectral_gap,
        alpha_max_matching_distance,
        eta_max_row_stochastic,
        eta_max_operator_norm,
        alpha_eta_max_unit_circle_gap: gap.modulus,
        alpha_eta_max_unit_circle_gap_real_part: gap.real_part,
        alpha_eta_max_matching_distance,
        alpha_for_eta,
        eta_for_alpha_eta,
    })
}

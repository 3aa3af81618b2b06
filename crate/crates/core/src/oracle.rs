//! Centralized reference solutions for F(x) = sum_i f_i(x).
//!
//! The simulator's residual metric needs F* from an independent route:
//! quadratics get the closed-form normal equations, everything else goes
//! through a damped Newton iteration with an Armijo backtracking line
//! search and a plain gradient-descent step whenever the pooled Hessian
//! fails to factor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::costs::{CostModel, QuadraticCost};
use crate::error::{Error, Result};

const ARMIJO_SLOPE: f64 = 1e-4;
const MAX_HALVINGS: u32 = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    ClosedForm,
    Newton,
    GradientDescent,
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub x_star: DVector<f64>,
    pub f_star: f64,
    pub grad_norm: f64,
    pub iterations: u64,
    pub method: SolveMethod,
}

/// Solves `(sum_i Q_i) x = sum_i Q_i c_i` directly.
pub fn solve_quadratic_closed_form(cost: &QuadraticCost) -> Result<OracleResult> {
    let m = cost.dim();
    let mut lhs = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for (qi, ci) in cost.curvatures().iter().zip(cost.centers()) {
        lhs += qi;
        rhs += qi * ci;
    }
    let chol = lhs
        .cholesky()
        .ok_or_else(|| Error::NumericFailure("pooled curvature is not positive definite".into()))?;
    let x_star = chol.solve(&rhs);
    let f_star = cost.total_value(&x_star);
    let grad_norm = cost.total_grad(&x_star).norm();
    Ok(OracleResult {
        x_star,
        f_star,
        grad_norm,
        iterations: 0,
        method: SolveMethod::ClosedForm,
    })
}

/// Damped Newton on the pooled objective, gradient descent when the pooled
/// Hessian has no Cholesky factor. Stops at
/// `||grad F|| <= 1e-10 * (1 + |F|)`, errors with [`Error::TimedOut`] past
/// `max_iters`.
pub fn solve_centralized(
    cost: &dyn CostModel,
    x0: Option<DVector<f64>>,
    max_iters: u64,
) -> Result<OracleResult> {
    let m = cost.dim();
    let mut x = x0.unwrap_or_else(|| DVector::zeros(m));
    if x.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "warm start has dimension {}, cost has {m}",
            x.len()
        )));
    }
    let mut f = cost.total_value(&x);
    if !f.is_finite() {
        return Err(Error::NumericFailure("objective not finite at the start point".into()));
    }
    let mut used_fallback = false;
    for iter in 0..max_iters {
        let g = cost.total_grad(&x);
        let g_norm = g.norm();
        if g_norm <= 1e-10 * (1.0 + f.abs()) {
            return Ok(OracleResult {
                x_star: x,
                f_star: f,
                grad_norm: g_norm,
                iterations: iter,
                method: if used_fallback {
                    SolveMethod::GradientDescent
                } else {
                    SolveMethod::Newton
                },
            });
        }
        let mut h = DMatrix::zeros(m, m);
        for i in 0..cost.n_nodes() {
            h += cost.hessian(i, &x);
        }
        let direction = match h.cholesky() {
            Some(chol) => -chol.solve(&g),
            None => {
                used_fallback = true;
                -&g / cost.gamma().max(1.0)
            }
        };
        let slope = g.dot(&direction);
        if slope >= 0.0 || slope.is_nan() {
            // Factorization produced an ascent direction; fall back.
            used_fallback = true;
            let mut t = 1.0 / cost.gamma().max(1.0);
            let mut ok = false;
            for _ in 0..MAX_HALVINGS {
                let cand = &x + &g * (-t);
                let fc = cost.total_value(&cand);
                if fc.is_finite() && fc <= f - ARMIJO_SLOPE * t * g_norm * g_norm {
                    x = cand;
                    f = fc;
                    ok = true;
                    break;
                }
                t *= 0.5;
            }
            if !ok {
                return Err(Error::NumericFailure(format!(
                    "line search stalled at iteration {iter} with gradient norm {g_norm}"
                )));
            }
            continue;
        }
        let mut t = 1.0;
        let mut stepped = false;
        for _ in 0..MAX_HALVINGS {
            let cand = &x + &direction * t;
            let fc = cost.total_value(&cand);
            if fc.is_finite() && fc <= f + ARMIJO_SLOPE * t * slope {
                x = cand;
                f = fc;
                stepped = true;
                break;
            }
            t *= 0.5;
        }
        if !stepped {
            return Err(Error::NumericFailure(format!(
                "line search stalled at iteration {iter} with gradient norm {g_norm}"
            )));
        }
    }
    Err(Error::TimedOut {
        iterations: max_iters,
    })
}

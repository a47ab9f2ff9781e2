//! Shared numerical kernels: gated symmetric solves, finite-difference
//! Jacobians, special functions, and an adaptive quadrature routine used as
//! an independent oracle for closed-form conditional moments.

mod linalg;
mod quad;
pub mod special;

pub use linalg::{solve_sym, sym_condition, Definiteness, SolveReport, CONDITION_LIMIT};
pub use quad::exp_weighted_integral;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix is not symmetric (max deviation {deviation:.3e})")]
    Asymmetric { deviation: f64 },
    #[error("matrix is numerically singular (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("function evaluation produced a non-finite value")]
    NonFinite,
    #[error("special function argument {arg} outside the domain x > 0")]
    Domain { arg: f64 },
    #[error("adaptive quadrature did not converge within {levels} refinement levels")]
    QuadratureDidNotConverge { levels: usize },
}

/// Central-difference Jacobian of `f` at `theta`.
///
/// The step for coordinate `j` is `h_rel * max(1, |theta_j|)`; `h_rel = 1e-6`
/// is a good default for the score and moment Jacobians checked in this crate.
pub fn finite_diff_jacobian<F>(
    f: F,
    theta: &DVector<f64>,
    h_rel: f64,
) -> Result<DMatrix<f64>, NumericsError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let d = theta.len();
    let base = f(theta);
    let m = base.len();
    let mut jac = DMatrix::zeros(m, d);
    let mut hi = theta.clone();
    let mut lo = theta.clone();
    for j in 0..d {
        let h = h_rel * theta[j].abs().max(1.0);
        hi[j] = theta[j] + h;
        lo[j] = theta[j] - h;
        let fp = f(&hi);
        let fm = f(&lo);
        for i in 0..m {
            let v = (fp[i] - fm[i]) / (2.0 * h);
            if !v.is_finite() {
                return Err(NumericsError::NonFinite);
            }
            jac[(i, j)] = v;
        }
        hi[j] = theta[j];
        lo[j] = theta[j];
    }
    Ok(jac)
}

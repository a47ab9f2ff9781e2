//! Gated dense symmetric solves.

use super::NumericsError;
use nalgebra::{DMatrix, SymmetricEigen};

/// Solves above this condition estimate are refused.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Relative symmetry tolerance for inputs to [`solve_sym`].
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Definiteness {
    PositiveDefinite,
    PositiveSemidefinite,
    Indefinite,
}

/// Outcome of a gated symmetric solve.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: DMatrix<f64>,
    /// Ratio of extreme singular values of the input (exact for symmetric
    /// matrices up to the eigensolver's accuracy).
    pub condition_estimate: f64,
    pub definiteness: Definiteness,
}

/// Solves `A X = B` for symmetric `A` via a spectral factorization.
///
/// Refuses asymmetric input and matrices with condition estimate above
/// [`CONDITION_LIMIT`]. The matrices in this crate stay below ~50 rows, so
/// the factorization cost is negligible next to the data passes that build
/// them.
pub fn solve_sym(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<SolveReport, NumericsError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "solve_sym requires a square matrix");
    assert_eq!(n, b.nrows(), "right-hand side rows must match");

    let scale = a.abs().max();
    if !scale.is_finite() {
        return Err(NumericsError::NonFinite);
    }
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            dev = dev.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if dev > SYMMETRY_TOL * scale.max(1.0) {
        return Err(NumericsError::Asymmetric { deviation: dev });
    }

    let eig = SymmetricEigen::new(a.clone());
    let mut max_abs = 0.0f64;
    let mut min_abs = f64::INFINITY;
    let mut min_signed = f64::INFINITY;
    for &l in eig.eigenvalues.iter() {
        max_abs = max_abs.max(l.abs());
        min_abs = min_abs.min(l.abs());
        min_signed = min_signed.min(l);
    }
    let condition = if min_abs == 0.0 { f64::INFINITY } else { max_abs / min_abs };
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(NumericsError::IllConditioned { condition });
    }

    let definiteness = if min_signed > 0.0 {
        Definiteness::PositiveDefinite
    } else if min_signed >= -1e-12 * max_abs {
        Definiteness::PositiveSemidefinite
    } else {
        Definiteness::Indefinite
    };

    // X = V diag(1/l) V^T B
    let vt_b = eig.eigenvectors.transpose() * b;
    let mut scaled = vt_b;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        let mut row = scaled.row_mut(i);
        row /= l;
    }
    let solution = &eig.eigenvectors * scaled;

    Ok(SolveReport { solution, condition_estimate: condition, definiteness })
}

/// Estimates the condition of a symmetric matrix without solving.
pub fn sym_condition(a: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(a.clone());
    let mut max_abs = 0.0f64;
    let mut min_abs = f64::INFINITY;
    for &l in eig.eigenvalues.iter() {
        max_abs = max_abs.max(l.abs());
        min_abs = min_abs.min(l.abs());
    }
    if min_abs == 0.0 {
        f64::INFINITY
    } else {
        max_abs / min_abs
    }
}

//! Monte Carlo estimates of the population Jacobian and covariance of the
//! stacked estimating equations, used only as test oracles.

use super::HarnessError;
use crate::data::Obs;
use crate::estimator::{eval_u, eval_u_jac, EstimatorKind};
use crate::model::Model;
use crate::moments::MomentFunction;
use crate::numerics;
use crate::rng::{self, stream};
use crate::sampling::Plan;
use nalgebra::{DMatrix, DVector};

/// Population-level `G`, `Ω`, and the implied asymptotic variances of the
/// corrected and plain estimators.
#[derive(Clone, Debug)]
pub struct PopulationMatrices {
    pub g: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub v_h: DMatrix<f64>,
    pub v_s: DMatrix<f64>,
}

/// Monte Carlo population matrices at the truth `theta0`.
///
/// Fresh `(X, Y)` pairs are drawn from the model; expectations weight each
/// record by its plan probability, matching the population definitions the
/// subsample assemblies estimate.
pub fn monte_carlo_population(
    model: &Model,
    theta0: &DVector<f64>,
    plan: &Plan,
    kind: EstimatorKind,
    momfun: &dyn MomentFunction,
    draws: usize,
    seed: u64,
) -> Result<PopulationMatrices, HarnessError> {
    monte_carlo_population_range(model, theta0, plan, kind, momfun, 0, draws, seed)
}

/// Disjoint-batch variant for Monte Carlo standard errors.
pub fn monte_carlo_population_batched(
    model: &Model,
    theta0: &DVector<f64>,
    plan: &Plan,
    kind: EstimatorKind,
    momfun: &dyn MomentFunction,
    draws_per_batch: usize,
    batches: usize,
    seed: u64,
) -> Result<Vec<PopulationMatrices>, HarnessError> {
    (0..batches)
        .map(|b| {
            monte_carlo_population_range(
                model,
                theta0,
                plan,
                kind,
                momfun,
                b * draws_per_batch,
                (b + 1) * draws_per_batch,
                seed,
            )
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn monte_carlo_population_range(
    model: &Model,
    theta0: &DVector<f64>,
    plan: &Plan,
    kind: EstimatorKind,
    momfun: &dyn MomentFunction,
    lo: usize,
    hi: usize,
    seed: u64,
) -> Result<PopulationMatrices, HarnessError> {
    model.validate_params(theta0)?;
    let p = model.p();
    let d = model.dim();
    let q = momfun.dim();
    let m = (hi - lo) as f64;
    let stride = (p + 2) as u64;
    let rho = plan.rho;

    let draw_record = |i: usize, x: &mut Vec<f64>| -> f64 {
        x.clear();
        for j in 0..p {
            x.push(2.0 * rng::u01(seed, stream::ORACLE, i as u64 * stride + j as u64) - 1.0);
        }
        let u = rng::u01(seed, stream::ORACLE, i as u64 * stride + p as u64);
        model.sample_response(theta0, x, u).expect("valid truth")
    };

    // Pass 1: mu0 = E[h].
    let mut mu0 = DVector::<f64>::zeros(q);
    {
        let mut x = Vec::with_capacity(p);
        let mut h = DVector::zeros(q);
        for i in lo..hi {
            let y = draw_record(i, &mut x);
            momfun.eval_into(Obs { x: &x, y }, &mut h)?;
            mu0 += &h;
        }
        mu0 /= m;
    }

    // Pass 2: weighted moments of u, v, and h - mu0.
    let mut g1 = DMatrix::<f64>::zeros(d, d);
    let mut g2 = DMatrix::<f64>::zeros(q, d);
    let mut o11 = DMatrix::<f64>::zeros(d, d);
    let mut o12 = DMatrix::<f64>::zeros(d, q);
    let mut o22 = DMatrix::<f64>::zeros(q, q);
    {
        let mut x = Vec::with_capacity(p);
        let mut u = DVector::zeros(d);
        let mut udot = DMatrix::zeros(d, d);
        let mut h = DVector::zeros(q);
        let mut mm = DVector::zeros(q);
        let mut mdot = DMatrix::zeros(q, d);
        let mut v = DVector::zeros(q);
        let mut dh = DVector::zeros(q);
        for i in lo..hi {
            let y = draw_record(i, &mut x);
            let obs = Obs { x: &x, y };
            let pr = plan.prob(model, obs)?;
            let w = rho / pr;

            eval_u(kind, model, plan, theta0, obs, &mut u)?;
            eval_u_jac(kind, model, plan, theta0, obs, &mut udot)?;
            momfun.eval_into(obs, &mut h)?;
            momfun.cond_mean_into(model, theta0, &x, &mut mm)?;
            momfun.cond_mean_jac_into(model, theta0, &x, &mut mdot)?;
            for r in 0..q {
                v[r] = w * (mm[r] - mu0[r]);
                dh[r] = h[r] - mu0[r];
            }

            // E[p * expr] / rho accumulators.
            let s = pr / rho;
            g1.zip_apply(&udot, |a, b| *a += s * b);
            g2.zip_apply(&mdot, |a, b| *a += s * w * b);
            for c in 0..d {
                for r in 0..d {
                    o11[(r, c)] += s * u[r] * u[c];
                }
            }
            for c in 0..q {
                let rc = v[c] - rho * dh[c];
                for r in 0..d {
                    o12[(r, c)] += s * u[r] * rc;
                }
            }
            let tail = rho * rho / pr;
            for c in 0..q {
                for r in 0..q {
                    o22[(r, c)] += s
                        * (v[r] * v[c] - rho * (v[r] * dh[c] + dh[r] * v[c])
                            + tail * dh[r] * dh[c]);
                }
            }
        }
    }
    g1 /= m;
    g2 /= m;
    o11 /= m;
    o12 /= m;
    o22 /= m;

    let mut g = DMatrix::zeros(d + q, d);
    g.view_mut((0, 0), (d, d)).copy_from(&g1);
    g.view_mut((d, 0), (q, d)).copy_from(&g2);
    let mut omega = DMatrix::zeros(d + q, d + q);
    omega.view_mut((0, 0), (d, d)).copy_from(&o11);
    omega.view_mut((0, d), (d, q)).copy_from(&o12);
    omega.view_mut((d, 0), (q, d)).copy_from(&o12.transpose());
    omega.view_mut((d, d), (q, q)).copy_from(&o22);
    for i in 0..(d + q) {
        for j in (i + 1)..(d + q) {
            let v = 0.5 * (omega[(i, j)] + omega[(j, i)]);
            omega[(i, j)] = v;
            omega[(j, i)] = v;
        }
    }

    let v_h = inv_quadratic(&g, &omega)?;
    let g1_block: DMatrix<f64> = g.view((0, 0), (d, d)).into();
    let o11_block: DMatrix<f64> = omega.view((0, 0), (d, d)).into();
    let v_s = inv_quadratic(&g1_block, &o11_block)?;

    Ok(PopulationMatrices { g, omega, v_h, v_s })
}

/// `(AᵀB⁻¹A)⁻¹` through gated symmetric solves.
fn inv_quadratic(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, HarnessError> {
    let w = numerics::solve_sym(b, a).map_err(crate::estimator::EstimatorError::from)?;
    let mut m = a.transpose() * w.solution;
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let inv = numerics::solve_sym(&m, &DMatrix::identity(n, n))
        .map_err(crate::estimator::EstimatorError::from)?;
    Ok(inv.solution)
}

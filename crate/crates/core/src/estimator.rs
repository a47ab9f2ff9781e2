//! Estimating equations, the plain subsample solver, GMM assembly, the
//! closed-form one-step moment-assisted correction, and plug-in variance
//! estimators.
//!
//! The assembled blocks follow, with `u` the estimating function, `w = ρ/p`,
//! `v = w (m(x; θ̃) - μ̂)` and `Δh = h - μ̂`, all sums over the subsample and
//! divided by the expected size `n`:
//!
//! ```text
//! g  = n⁻¹ Σ (u; v)
//! G  = n⁻¹ Σ (u̇; w ṁ)
//! Ω₁₁ = n⁻¹ Σ u uᵀ
//! Ω₁₂ = n⁻¹ Σ u (v - ρ Δh)ᵀ
//! Ω₂₂ = n⁻¹ Σ v vᵀ - ρ v Δhᵀ - ρ Δh vᵀ + ρ² p⁻¹ Δh Δhᵀ
//! ```
//!
//! The corrected estimator is `θ̃ - (GᵀΩ⁻¹G)⁻¹ GᵀΩ⁻¹ g`, computed through two
//! gated symmetric solves, never an explicit inverse.

use crate::chunked;
use crate::data::Records;
use crate::model::{sigmoid, Model, ModelError};
use crate::moments::{MomentError, MomentFunction, WholeDataMoment};
use crate::numerics::{self, Definiteness, NumericsError};
use crate::sampling::{Plan, SamplingError, Subsample};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("sampled-likelihood correction requires a binary-response model, got {0:?}")]
    MsclUnsupported(Model),
    #[error("inclusion probability {p} is not positive")]
    ZeroProbability { p: f64 },
    #[error("conditional inclusion probability is not positive")]
    DegeneratePiBar,
    #[error("subsample is empty")]
    EmptySubsample,
    #[error("moment dimension {moment} does not match whole-data average of length {mu}")]
    MomentDimension { moment: usize, mu: usize },
    #[error("Newton step Jacobian is numerically singular (condition {condition:.3e})")]
    SingularJacobian { condition: f64 },
    #[error("solver did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },
    #[error("parameter diverged (norm {norm:.2}); the logistic subsample is likely separated")]
    PerfectSeparation { norm: f64 },
    #[error("parameter diverged (norm {norm:.2})")]
    Diverged { norm: f64 },
    #[error("covariance block {block} is numerically singular (condition {condition:.3e})")]
    SingularCovariance { block: &'static str, condition: f64 },
    #[error("GᵀΩ⁻¹G is rank deficient; the moment stack does not identify the parameter")]
    RankDeficient,
    #[error("variance estimate is not positive definite")]
    VarianceNotPd,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Which estimating function the plain solver uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Unweighted score equation on the subsample.
    UniformMle,
    /// Inverse-probability-weighted score: `(ρ/p) ψ`.
    Ipw,
    /// Sampled conditional likelihood score: `ψ - π̄̇/π̄`.
    Mscl,
}

impl EstimatorKind {
    /// MSCL needs the closed-form conditional inclusion probability, which
    /// only the binary-response model provides.
    pub fn validate_for(&self, model: &Model) -> Result<(), EstimatorError> {
        if *self == EstimatorKind::Mscl && !model.is_logistic() {
            return Err(EstimatorError::MsclUnsupported(*model));
        }
        Ok(())
    }
}

/// Conditional inclusion probability `π̄(x; θ) = Σ_y p(x, y) f(y | x; θ)` and
/// its gradient, for the binary-response model.
pub fn mscl_pi_bar(
    model: &Model,
    plan: &Plan,
    theta: &DVector<f64>,
    x: &[f64],
) -> Result<(f64, DVector<f64>), EstimatorError> {
    let (pi_bar, coeff, _curv) = mscl_terms(model, plan, theta, x)?;
    let mut grad = DVector::zeros(model.dim());
    grad[0] = coeff;
    for (j, &xj) in x.iter().enumerate() {
        grad[j + 1] = coeff * xj;
    }
    Ok((pi_bar, grad))
}

/// Shared MSCL quantities: `π̄`, the coefficient of `(1, x)ᵀ` in `π̄̇`, and the
/// coefficient of `(1, x)ᵀ(1, x)` in `π̄̈`.
fn mscl_terms(
    model: &Model,
    plan: &Plan,
    theta: &DVector<f64>,
    x: &[f64],
) -> Result<(f64, f64, f64), EstimatorError> {
    if !model.is_logistic() {
        return Err(EstimatorError::MsclUnsupported(*model));
    }
    let (p1, p0) = plan.prob_pair(model, x)?;
    let sig = sigmoid(model.linear_predictor(theta, x));
    mscl_terms_from_pair(p1, p0, sig)
}

#[inline]
fn mscl_terms_from_pair(p1: f64, p0: f64, sig: f64) -> Result<(f64, f64, f64), EstimatorError> {
    let pi_bar = p1 * sig + p0 * (1.0 - sig);
    if !(pi_bar > 0.0) {
        return Err(EstimatorError::DegeneratePiBar);
    }
    let dsig = sig * (1.0 - sig);
    let d2sig = dsig * (1.0 - 2.0 * sig);
    Ok((pi_bar, (p1 - p0) * dsig, (p1 - p0) * d2sig))
}

/// Evaluates the unified estimating function `u(x, y; θ)` into `out`.
pub fn eval_u(
    kind: EstimatorKind,
    model: &Model,
    plan: &Plan,
    theta: &DVector<f64>,
    obs: crate::data::Obs<'_>,
    out: &mut DVector<f64>,
) -> Result<(), EstimatorError> {
    match kind {
        EstimatorKind::UniformMle => {
            model.score_into(theta, obs, out)?;
        }
        EstimatorKind::Ipw => {
            let p = plan.prob(model, obs)?;
            if !(p > 0.0) {
                return Err(EstimatorError::ZeroProbability { p });
            }
            model.score_into(theta, obs, out)?;
            *out *= plan.rho / p;
        }
        EstimatorKind::Mscl => {
            model.score_into(theta, obs, out)?;
            let (pi_bar, coeff, _) = mscl_terms(model, plan, theta, obs.x)?;
            let scale = coeff / pi_bar;
            out[0] -= scale;
            for (j, &xj) in obs.x.iter().enumerate() {
                out[j + 1] -= scale * xj;
            }
        }
    }
    Ok(())
}

/// Evaluates the Jacobian of `u` with respect to `θ` into `out`.
pub fn eval_u_jac(
    kind: EstimatorKind,
    model: &Model,
    plan: &Plan,
    theta: &DVector<f64>,
    obs: crate::data::Obs<'_>,
    out: &mut DMatrix<f64>,
) -> Result<(), EstimatorError> {
    match kind {
        EstimatorKind::UniformMle => {
            model.score_jacobian_into(theta, obs, out)?;
        }
        EstimatorKind::Ipw => {
            let p = plan.prob(model, obs)?;
            if !(p > 0.0) {
                return Err(EstimatorError::ZeroProbability { p });
            }
            model.score_jacobian_into(theta, obs, out)?;
            *out *= plan.rho / p;
        }
        EstimatorKind::Mscl => {
            model.score_jacobian_into(theta, obs, out)?;
            let (pi_bar, coeff, curv) = mscl_terms(model, plan, theta, obs.x)?;
            // d/dθ (π̄̇/π̄) = (π̄̈ π̄ - π̄̇ π̄̇ᵀ) / π̄², all proportional to the
            // intercept-augmented outer product.
            let scale = (curv * pi_bar - coeff * coeff) / (pi_bar * pi_bar);
            sub_scaled_outer(out, obs.x, scale);
        }
    }
    Ok(())
}

/// Subtracts `w (1, x)(1, x)ᵀ` from `out` in place.
fn sub_scaled_outer(out: &mut DMatrix<f64>, x: &[f64], w: f64) {
    out[(0, 0)] -= w;
    for (j, &xj) in x.iter().enumerate() {
        out[(0, j + 1)] -= w * xj;
        out[(j + 1, 0)] -= w * xj;
        for (k, &xk) in x.iter().enumerate() {
            out[(j + 1, k + 1)] -= w * xj * xk;
        }
    }
}

/// Per-entry evaluator for subsample loops. Resolves plan quantities once
/// per entry (the stored inclusion probability; for MSCL the probability
/// pair, which does not depend on `θ`), producing results bit-identical to
/// [`eval_u`] / [`eval_u_jac`].
struct EntryEval<'a> {
    kind: EstimatorKind,
    model: &'a Model,
    rho: f64,
    /// MSCL only: `(p(x, 1), p(x, 0))` per subsample entry.
    pairs: Vec<(f64, f64)>,
}

impl<'a> EntryEval<'a> {
    fn new<R: Records>(
        kind: EstimatorKind,
        model: &'a Model,
        plan: &Plan,
        records: &R,
        sub: &Subsample,
    ) -> Result<Self, EstimatorError> {
        kind.validate_for(model)?;
        let pairs = if kind == EstimatorKind::Mscl {
            let mut pairs = Vec::with_capacity(sub.len());
            for &i in &sub.indices {
                let obs = records.get(i).expect("subsample index in view");
                pairs.push(plan.prob_pair(model, obs.x)?);
            }
            pairs
        } else {
            Vec::new()
        };
        Ok(EntryEval { kind, model, rho: plan.rho, pairs })
    }

    #[inline]
    fn u(
        &self,
        k: usize,
        obs: crate::data::Obs<'_>,
        p: f64,
        theta: &DVector<f64>,
        out: &mut DVector<f64>,
    ) -> Result<(), EstimatorError> {
        match self.kind {
            EstimatorKind::UniformMle => self.model.score_into(theta, obs, out)?,
            EstimatorKind::Ipw => {
                if !(p > 0.0) {
                    return Err(EstimatorError::ZeroProbability { p });
                }
                self.model.score_into(theta, obs, out)?;
                *out *= self.rho / p;
            }
            EstimatorKind::Mscl => {
                self.model.score_into(theta, obs, out)?;
                let (p1, p0) = self.pairs[k];
                let sig = sigmoid(self.model.linear_predictor(theta, obs.x));
                let (pi_bar, coeff, _) = mscl_terms_from_pair(p1, p0, sig)?;
                let scale = coeff / pi_bar;
                out[0] -= scale;
                for (j, &xj) in obs.x.iter().enumerate() {
                    out[j + 1] -= scale * xj;
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn u_jac(
        &self,
        k: usize,
        obs: crate::data::Obs<'_>,
        p: f64,
        theta: &DVector<f64>,
        out: &mut DMatrix<f64>,
    ) -> Result<(), EstimatorError> {
        match self.kind {
            EstimatorKind::UniformMle => self.model.score_jacobian_into(theta, obs, out)?,
            EstimatorKind::Ipw => {
                if !(p > 0.0) {
                    return Err(EstimatorError::ZeroProbability { p });
                }
                self.model.score_jacobian_into(theta, obs, out)?;
                *out *= self.rho / p;
            }
            EstimatorKind::Mscl => {
                self.model.score_jacobian_into(theta, obs, out)?;
                let (p1, p0) = self.pairs[k];
                let sig = sigmoid(self.model.linear_predictor(theta, obs.x));
                let (pi_bar, coeff, curv) = mscl_terms_from_pair(p1, p0, sig)?;
                let scale = (curv * pi_bar - coeff * coeff) / (pi_bar * pi_bar);
                sub_scaled_outer(out, obs.x, scale);
            }
        }
        Ok(())
    }
}

/// Result of the plain subsample solve.
#[derive(Clone, Debug)]
pub struct PlainFit {
    pub theta: DVector<f64>,
    pub iterations: usize,
    /// `‖Σu‖ / |S|` at the solution.
    pub grad_norm: f64,
}

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-8;
const NEWTON_MAX_HALVINGS: usize = 30;
const DIVERGENCE_NORM: f64 = 50.0;

/// Solves `Σ_{i∈S} u(x_i, y_i; θ) = 0` by Newton iteration with step-halving
/// line search on the residual norm.
pub fn solve_plain<R: Records>(
    kind: EstimatorKind,
    model: &Model,
    plan: &Plan,
    records: &R,
    sub: &Subsample,
    theta_init: &DVector<f64>,
) -> Result<PlainFit, EstimatorError> {
    kind.validate_for(model)?;
    if sub.is_empty() {
        return Err(EstimatorError::EmptySubsample);
    }
    model.validate_params(theta_init)?;
    let d = model.dim();
    let size = sub.len() as f64;
    let eval = EntryEval::new(kind, model, plan, records, sub)?;

    let mut theta = theta_init.clone();
    let mut usum = sum_u(&eval, records, sub, &theta)?;
    let mut norm = usum.norm();

    for iter in 0..NEWTON_MAX_ITER {
        if norm / size < NEWTON_TOL {
            return Ok(PlainFit { theta, iterations: iter, grad_norm: norm / size });
        }
        let jac = sum_u_jac(&eval, records, sub, &theta)?;
        let step = match numerics::solve_sym(&jac, &DMatrix::from_column_slice(d, 1, usum.as_slice())) {
            Ok(rep) => DVector::from_column_slice(rep.solution.as_slice()),
            Err(NumericsError::IllConditioned { condition }) => {
                return Err(EstimatorError::SingularJacobian { condition })
            }
            Err(e) => return Err(e.into()),
        };

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..NEWTON_MAX_HALVINGS {
            let candidate = &theta - &step * scale;
            if model.validate_params(&candidate).is_err() {
                scale *= 0.5;
                continue;
            }
            match sum_u(&eval, records, sub, &candidate) {
                Ok(u_new) => {
                    let n_new = u_new.norm();
                    if n_new.is_finite() && n_new < norm {
                        theta = candidate;
                        usum = u_new;
                        norm = n_new;
                        accepted = true;
                        break;
                    }
                    scale *= 0.5;
                }
                Err(_) => scale *= 0.5,
            }
        }
        if !accepted {
            return Err(EstimatorError::NonConvergence {
                iterations: iter,
                grad_norm: norm / size,
            });
        }
        if theta.norm() > DIVERGENCE_NORM {
            let norm = theta.norm();
            return Err(if model.is_logistic() {
                EstimatorError::PerfectSeparation { norm }
            } else {
                EstimatorError::Diverged { norm }
            });
        }
    }
    Err(EstimatorError::NonConvergence { iterations: NEWTON_MAX_ITER, grad_norm: norm / size })
}

fn sum_u<R: Records>(
    eval: &EntryEval<'_>,
    records: &R,
    sub: &Subsample,
    theta: &DVector<f64>,
) -> Result<DVector<f64>, EstimatorError> {
    let d = eval.model.dim();
    chunked::fold_indexed(
        sub.len(),
        || DVector::<f64>::zeros(d),
        |start, end, acc| {
            let mut buf = DVector::zeros(d);
            for k in start..end {
                let obs = records.get(sub.indices[k]).expect("subsample index in view");
                eval.u(k, obs, sub.probs[k], theta, &mut buf)?;
                *acc += &buf;
            }
            Ok::<(), EstimatorError>(())
        },
        |a, b| *a += b,
    )
}

fn sum_u_jac<R: Records>(
    eval: &EntryEval<'_>,
    records: &R,
    sub: &Subsample,
    theta: &DVector<f64>,
) -> Result<DMatrix<f64>, EstimatorError> {
    let d = eval.model.dim();
    chunked::fold_indexed(
        sub.len(),
        || DMatrix::<f64>::zeros(d, d),
        |start, end, acc| {
            let mut buf = DMatrix::zeros(d, d);
            for k in start..end {
                let obs = records.get(sub.indices[k]).expect("subsample index in view");
                eval.u_jac(k, obs, sub.probs[k], theta, &mut buf)?;
                *acc += &buf;
            }
            Ok::<(), EstimatorError>(())
        },
        |a, b| *a += b,
    )
}

/// Maximum likelihood on every record; the whole-data baseline.
pub fn whole_data_mle<R: Records>(
    model: &Model,
    records: &R,
    theta_init: &DVector<f64>,
) -> Result<PlainFit, EstimatorError> {
    let full = Subsample::full(records);
    let plan = Plan::uniform(full.expected_n.max(1.0), records.count().max(1), records.index_bound())?;
    solve_plain(EstimatorKind::UniformMle, model, &plan, records, &full, theta_init)
}

/// The stacked residual, Jacobian, and covariance of the combined estimating
/// equations at `θ̃`.
#[derive(Clone, Debug)]
pub struct GmmAssembly {
    pub d: usize,
    pub q: usize,
    /// Stacked residual `g(θ̃)`, length `d + q`.
    pub g: DVector<f64>,
    /// Stacked Jacobian, `(d + q) × d`.
    pub big_g: DMatrix<f64>,
    /// Covariance of the stack, `(d + q) × (d + q)`, symmetric.
    pub omega: DMatrix<f64>,
    pub theta_tilde: DVector<f64>,
    pub n_expected: f64,
    pub rho: f64,
    pub mu_hat: WholeDataMoment,
    /// Set when an exploratory jitter was added to the moment block.
    pub jittered: bool,
}

impl GmmAssembly {
    pub fn omega11(&self) -> DMatrix<f64> {
        self.omega.view((0, 0), (self.d, self.d)).into()
    }

    pub fn omega12(&self) -> DMatrix<f64> {
        self.omega.view((0, self.d), (self.d, self.q)).into()
    }

    pub fn omega22(&self) -> DMatrix<f64> {
        self.omega.view((self.d, self.d), (self.q, self.q)).into()
    }

    /// Opt-in ridge on the moment block for exploratory runs:
    /// adds `1e-10 · tr(Ω₂₂)/q` to its diagonal.
    pub fn apply_jitter(&mut self) {
        if self.q == 0 {
            return;
        }
        let tr: f64 = (0..self.q).map(|j| self.omega[(self.d + j, self.d + j)]).sum();
        let eps = 1e-10 * tr / self.q as f64;
        for j in 0..self.q {
            self.omega[(self.d + j, self.d + j)] += eps;
        }
        self.jittered = true;
    }
}

/// Builds the GMM assembly from a solved subsample.
pub fn assemble_gmm<R: Records>(
    kind: EstimatorKind,
    model: &Model,
    plan: &Plan,
    records: &R,
    sub: &Subsample,
    momfun: &dyn MomentFunction,
    mu_hat: &WholeDataMoment,
    theta_tilde: &DVector<f64>,
) -> Result<GmmAssembly, EstimatorError> {
    kind.validate_for(model)?;
    model.validate_params(theta_tilde)?;
    if sub.is_empty() {
        return Err(EstimatorError::EmptySubsample);
    }
    let d = model.dim();
    let q = momfun.dim();
    if mu_hat.mu_hat.len() != q {
        return Err(EstimatorError::MomentDimension { moment: q, mu: mu_hat.mu_hat.len() });
    }
    let n = plan.n_expected;
    let rho = plan.rho;
    let eval = EntryEval::new(kind, model, plan, records, sub)?;

    struct Acc {
        g: DVector<f64>,
        big_g: DMatrix<f64>,
        o11: DMatrix<f64>,
        o12: DMatrix<f64>,
        o22: DMatrix<f64>,
    }

    let acc = chunked::fold_indexed(
        sub.len(),
        || Acc {
            g: DVector::zeros(d + q),
            big_g: DMatrix::zeros(d + q, d),
            o11: DMatrix::zeros(d, d),
            o12: DMatrix::zeros(d, q),
            o22: DMatrix::zeros(q, q),
        },
        |start, end, acc| {
            let mut u = DVector::zeros(d);
            let mut udot = DMatrix::zeros(d, d);
            let mut m = DVector::zeros(q);
            let mut mdot = DMatrix::zeros(q, d);
            let mut h = DVector::zeros(q);
            let mut v = DVector::zeros(q);
            let mut dh = DVector::zeros(q);
            let mut o12_right = DVector::zeros(q);
            for k in start..end {
                let obs = records.get(sub.indices[k]).expect("subsample index in view");
                let p = sub.probs[k];
                if !(p > 0.0) {
                    return Err(EstimatorError::ZeroProbability { p });
                }
                let w = rho / p;

                eval.u(k, obs, p, theta_tilde, &mut u)?;
                eval.u_jac(k, obs, p, theta_tilde, &mut udot)?;
                momfun.eval_into(obs, &mut h)?;
                momfun.cond_mean_into(model, theta_tilde, obs.x, &mut m)?;
                momfun.cond_mean_jac_into(model, theta_tilde, obs.x, &mut mdot)?;

                for r in 0..q {
                    v[r] = w * (m[r] - mu_hat.mu_hat[r]);
                    dh[r] = h[r] - mu_hat.mu_hat[r];
                    o12_right[r] = v[r] - rho * dh[r];
                }

                // Column-slice accumulation: the per-record updates are
                // rank-one in each block, so every column is an axpy.
                let us = u.as_slice();
                let vs = v.as_slice();
                let dhs = dh.as_slice();
                for (gr, &uv) in acc.g.as_mut_slice()[..d].iter_mut().zip(us) {
                    *gr += uv;
                }
                for (gr, &vv) in acc.g.as_mut_slice()[d..].iter_mut().zip(vs) {
                    *gr += vv;
                }
                {
                    let stride = d + q;
                    let bg = acc.big_g.as_mut_slice();
                    let uds = udot.as_slice();
                    let mds = mdot.as_slice();
                    for c in 0..d {
                        let col = &mut bg[c * stride..c * stride + stride];
                        for (dst, &src) in col[..d].iter_mut().zip(&uds[c * d..(c + 1) * d]) {
                            *dst += src;
                        }
                        for (dst, &src) in col[d..].iter_mut().zip(&mds[c * q..(c + 1) * q]) {
                            *dst += w * src;
                        }
                    }
                }
                {
                    let o11 = acc.o11.as_mut_slice();
                    for c in 0..d {
                        let uc = us[c];
                        for (dst, &ur) in o11[c * d..(c + 1) * d].iter_mut().zip(us) {
                            *dst += ur * uc;
                        }
                    }
                }
                {
                    let o12 = acc.o12.as_mut_slice();
                    for c in 0..q {
                        let rc = o12_right[c];
                        for (dst, &ur) in o12[c * d..(c + 1) * d].iter_mut().zip(us) {
                            *dst += ur * rc;
                        }
                    }
                }
                {
                    let tail = rho * rho / p;
                    let o22 = acc.o22.as_mut_slice();
                    for c in 0..q {
                        // v (v_c - rho dh_c) + dh (tail dh_c - rho v_c)
                        let a = vs[c] - rho * dhs[c];
                        let b = tail * dhs[c] - rho * vs[c];
                        for ((dst, &vr), &dr) in
                            o22[c * q..(c + 1) * q].iter_mut().zip(vs).zip(dhs)
                        {
                            *dst += vr * a + dr * b;
                        }
                    }
                }
            }
            Ok(())
        },
        |a, b| {
            a.g += b.g;
            a.big_g += b.big_g;
            a.o11 += b.o11;
            a.o12 += b.o12;
            a.o22 += b.o22;
        },
    )?;

    let inv_n = 1.0 / n;
    let g = acc.g * inv_n;
    let big_g = acc.big_g * inv_n;
    let mut omega = DMatrix::zeros(d + q, d + q);
    omega.view_mut((0, 0), (d, d)).copy_from(&(&acc.o11 * inv_n));
    omega.view_mut((0, d), (d, q)).copy_from(&(&acc.o12 * inv_n));
    omega.view_mut((d, 0), (q, d)).copy_from(&(acc.o12.transpose() * inv_n));
    omega.view_mut((d, d), (q, q)).copy_from(&(&acc.o22 * inv_n));
    // The moment block is assembled from symmetric per-record terms; kill
    // the residual rounding asymmetry so the gated solver accepts it.
    symmetrize(&mut omega);

    Ok(GmmAssembly {
        d,
        q,
        g,
        big_g,
        omega,
        theta_tilde: theta_tilde.clone(),
        n_expected: n,
        rho,
        mu_hat: mu_hat.clone(),
        jittered: false,
    })
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

struct MasCore {
    theta_mas: DVector<f64>,
    v_hat: DMatrix<f64>,
    condition_omega: f64,
}

fn mas_core(assembly: &GmmAssembly) -> Result<MasCore, EstimatorError> {
    let d = assembly.d;
    let q = assembly.q;

    // One solve against [G | g], then a d-dimensional solve for the step.
    let mut rhs = DMatrix::zeros(d + q, d + 1);
    rhs.view_mut((0, 0), (d + q, d)).copy_from(&assembly.big_g);
    rhs.view_mut((0, d), (d + q, 1)).copy_from(&assembly.g);
    let omega_solve = match numerics::solve_sym(&assembly.omega, &rhs) {
        Ok(rep) => rep,
        Err(NumericsError::IllConditioned { condition }) => {
            return Err(EstimatorError::SingularCovariance {
                block: diagnose_omega_block(assembly),
                condition,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let w_g = omega_solve.solution.view((0, 0), (d + q, d));
    let w_g_small = omega_solve.solution.view((0, d), (d + q, 1));

    let mut m = assembly.big_g.transpose() * w_g;
    symmetrize(&mut m);
    let rhs_step = assembly.big_g.transpose() * w_g_small;

    let mut m_rhs = DMatrix::zeros(d, d + 1);
    m_rhs.view_mut((0, 0), (d, d)).copy_from(&DMatrix::<f64>::identity(d, d));
    m_rhs.view_mut((0, d), (d, 1)).copy_from(&rhs_step);
    let m_solve = match numerics::solve_sym(&m, &m_rhs) {
        Ok(rep) => {
            if rep.definiteness != Definiteness::PositiveDefinite {
                return Err(EstimatorError::RankDeficient);
            }
            rep
        }
        Err(NumericsError::IllConditioned { .. }) => return Err(EstimatorError::RankDeficient),
        Err(e) => return Err(e.into()),
    };

    let mut v_hat: DMatrix<f64> = m_solve.solution.view((0, 0), (d, d)).into();
    symmetrize(&mut v_hat);
    let step = DVector::from_iterator(d, m_solve.solution.view((0, d), (d, 1)).iter().copied());
    let theta_mas = &assembly.theta_tilde - step;

    let v_eigs = v_hat.symmetric_eigenvalues();
    if !v_eigs.iter().all(|&l| l > 0.0) {
        return Err(EstimatorError::VarianceNotPd);
    }

    Ok(MasCore { theta_mas, v_hat, condition_omega: omega_solve.condition_estimate })
}

fn diagnose_omega_block(assembly: &GmmAssembly) -> &'static str {
    let limit = numerics::CONDITION_LIMIT;
    if assembly.q == 0 {
        return "omega11";
    }
    if numerics::sym_condition(&assembly.omega11()) > limit {
        "omega11"
    } else if numerics::sym_condition(&assembly.omega22()) > limit {
        "omega22"
    } else {
        "omega (cross-block coupling)"
    }
}

/// One-step corrected estimate from an assembly.
pub fn mas_step(assembly: &GmmAssembly) -> Result<DVector<f64>, EstimatorError> {
    Ok(mas_core(assembly)?.theta_mas)
}

/// Plug-in variance `(GᵀΩ⁻¹G)⁻¹` and the implied standard errors
/// `sqrt(diag / n)`.
pub fn variance_estimate(
    assembly: &GmmAssembly,
) -> Result<(DMatrix<f64>, DVector<f64>), EstimatorError> {
    let core = mas_core(assembly)?;
    let se = std_errors_from(&core.v_hat, assembly.n_expected)?;
    Ok((core.v_hat, se))
}

fn std_errors_from(v_hat: &DMatrix<f64>, n: f64) -> Result<DVector<f64>, EstimatorError> {
    let se = DVector::from_fn(v_hat.nrows(), |i, _| (v_hat[(i, i)] / n).sqrt());
    if se.iter().any(|v| !v.is_finite()) {
        return Err(EstimatorError::VarianceNotPd);
    }
    Ok(se)
}

/// Corrected estimate, plug-in variance, and run diagnostics in one shot.
#[derive(Clone, Debug)]
pub struct MasResult {
    pub theta_mas: DVector<f64>,
    pub v_hat: DMatrix<f64>,
    pub std_errors: DVector<f64>,
    pub condition_omega: f64,
    pub diagnostics: MasDiagnostics,
}

#[derive(Clone, Debug, Default)]
pub struct MasDiagnostics {
    pub newton_iterations: usize,
    pub realized_subsample: usize,
    pub plan_fell_back_to_uniform: bool,
    pub jittered: bool,
}

pub fn mas_result(
    assembly: &GmmAssembly,
    diagnostics: MasDiagnostics,
) -> Result<MasResult, EstimatorError> {
    let core = mas_core(assembly)?;
    let std_errors = std_errors_from(&core.v_hat, assembly.n_expected)?;
    Ok(MasResult {
        theta_mas: core.theta_mas,
        v_hat: core.v_hat,
        std_errors,
        condition_omega: core.condition_omega,
        diagnostics: MasDiagnostics { jittered: assembly.jittered, ..diagnostics },
    })
}

/// Sandwich variance of the plain estimator: `(G₁ᵀ Ω₁₁⁻¹ G₁)⁻¹` from
/// subsample sums at `θ̃`, divided by expected size `n`.
pub fn plain_variance<R: Records>(
    kind: EstimatorKind,
    model: &Model,
    plan: &Plan,
    records: &R,
    sub: &Subsample,
    theta_tilde: &DVector<f64>,
) -> Result<DMatrix<f64>, EstimatorError> {
    kind.validate_for(model)?;
    if sub.is_empty() {
        return Err(EstimatorError::EmptySubsample);
    }
    let d = model.dim();
    let n = plan.n_expected;
    let eval = EntryEval::new(kind, model, plan, records, sub)?;

    let (mut g1, mut o11) = chunked::fold_indexed(
        sub.len(),
        || (DMatrix::<f64>::zeros(d, d), DMatrix::<f64>::zeros(d, d)),
        |start, end, acc| {
            let mut u = DVector::zeros(d);
            let mut udot = DMatrix::zeros(d, d);
            for k in start..end {
                let obs = records.get(sub.indices[k]).expect("subsample index in view");
                eval.u(k, obs, sub.probs[k], theta_tilde, &mut u)?;
                eval.u_jac(k, obs, sub.probs[k], theta_tilde, &mut udot)?;
                acc.0 += &udot;
                for c in 0..d {
                    for r in 0..d {
                        acc.1[(r, c)] += u[r] * u[c];
                    }
                }
            }
            Ok::<(), EstimatorError>(())
        },
        |a, b| {
            a.0 += b.0;
            a.1 += b.1;
        },
    )?;
    g1 /= n;
    o11 /= n;
    symmetrize(&mut o11);

    let w = match numerics::solve_sym(&o11, &g1) {
        Ok(rep) => rep.solution,
        Err(NumericsError::IllConditioned { condition }) => {
            return Err(EstimatorError::SingularCovariance { block: "omega11", condition })
        }
        Err(e) => return Err(e.into()),
    };
    let mut m = g1.transpose() * w;
    symmetrize(&mut m);
    let inv = match numerics::solve_sym(&m, &DMatrix::<f64>::identity(d, d)) {
        Ok(rep) => {
            if rep.definiteness != Definiteness::PositiveDefinite {
                return Err(EstimatorError::RankDeficient);
            }
            rep.solution
        }
        Err(NumericsError::IllConditioned { .. }) => return Err(EstimatorError::RankDeficient),
        Err(e) => return Err(e.into()),
    };
    let mut v = inv;
    symmetrize(&mut v);
    Ok(v)
}

/// Standard errors from a plain sandwich variance.
pub fn plain_std_errors(v: &DMatrix<f64>, n: f64) -> Result<DVector<f64>, EstimatorError> {
    std_errors_from(v, n)
}

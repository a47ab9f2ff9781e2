//! Moment function vectors, their model-conditional means, and whole-data
//! sample moments.
//!
//! A moment function `h(x, y)` supplies auxiliary information: its average
//! over the whole data is cheap to compute in one streaming pass, while its
//! conditional mean `m(x; θ) = ∫ h(x, y) f(y | x; θ) dy` and the Jacobian
//! `∂m/∂θ` have closed forms for the built-in choices.

use crate::chunked;
use crate::data::{Obs, Records};
use crate::model::{sigmoid, Model, ModelError};
use crate::numerics::{self, special, NumericsError};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MomentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("moment function is bound to {bound:?}, called with {got:?}")]
    ModelMismatch { bound: Model, got: Model },
    #[error("conditional moment out of range: {0}")]
    Range(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("conditional moments require a continuous-response model")]
    ContinuousOnly,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A `q`-dimensional moment function with closed-form conditional moments.
pub trait MomentFunction: Sync {
    /// Output dimension `q`.
    fn dim(&self) -> usize;

    /// Evaluates `h(x, y)` into `out`.
    fn eval_into(&self, obs: Obs<'_>, out: &mut DVector<f64>) -> Result<(), MomentError>;

    /// Evaluates `m(x; θ) = ∫ h(x, y) f(y | x; θ) dy` into `out`.
    fn cond_mean_into(
        &self,
        model: &Model,
        theta: &DVector<f64>,
        x: &[f64],
        out: &mut DVector<f64>,
    ) -> Result<(), MomentError>;

    /// Evaluates `∂m/∂θ` (a `q × d` matrix) into `out`.
    fn cond_mean_jac_into(
        &self,
        model: &Model,
        theta: &DVector<f64>,
        x: &[f64],
        out: &mut DMatrix<f64>,
    ) -> Result<(), MomentError>;

    fn eval(&self, obs: Obs<'_>) -> Result<DVector<f64>, MomentError> {
        let mut out = DVector::zeros(self.dim());
        self.eval_into(obs, &mut out)?;
        Ok(out)
    }

    fn cond_mean(
        &self,
        model: &Model,
        theta: &DVector<f64>,
        x: &[f64],
    ) -> Result<DVector<f64>, MomentError> {
        let mut out = DVector::zeros(self.dim());
        self.cond_mean_into(model, theta, x, &mut out)?;
        Ok(out)
    }

    fn cond_mean_jac(
        &self,
        model: &Model,
        theta: &DVector<f64>,
        x: &[f64],
    ) -> Result<DMatrix<f64>, MomentError> {
        let mut out = DMatrix::zeros(self.dim(), theta.len());
        self.cond_mean_jac_into(model, theta, x, &mut out)?;
        Ok(out)
    }
}

/// `h(x, y) = x · y`: covariates scaled by the response, `q = p`.
#[derive(Clone, Copy, Debug)]
pub struct XyMoment {
    p: usize,
}

impl XyMoment {
    pub fn new(p: usize) -> Self {
        XyMoment { p }
    }
}

impl MomentFunction for XyMoment {
    fn dim(&self) -> usize {
        self.p
    }

    fn eval_into(&self, obs: Obs<'_>, out: &mut DVector<f64>) -> Result<(), MomentError> {
        debug_assert_eq!(obs.x.len(), self.p);
        for (j, &xj) in obs.x.iter().enumerate() {
            out[j] = xj * obs.y;
        }
        Ok(())
    }

    fn cond_mean_into(
        &self,
        model: &Model,
        theta: &DVector<f64>,
        x: &[f64],
        out: &mut DVector<f64>,
    ) -> Result<(), MomentError> {
        let mu = model.mean_response(theta, x)?;
        for (j, &xj) in x.iter().enumerate() {
            out[j] = mu * xj;
        }
        Ok(())
    }

    fn cond_mean_jac_into(
        &self,
        model: &Model,
        theta: &DVector<f64>,
        x: &[f64],
        out: &mut DMatrix<f64>,
    ) -> Result<(), MomentError> {
        model.validate_params(theta)?;
        // Rows are x_j times the gradient of the mean response.
        match model {
            Model::Logistic { .. } => {
                let sig = sigmoid(model.linear_predictor(theta, x));
                let w = sig * (1.0 - sig);
                for (j, &xj) in x.iter().enumerate() {
                    out[(j, 0)] = w * xj;
                    for (k, &xk) in x.iter().enumerate() {
                        out[(j, k + 1)] = w * xj * xk;
                    }
                }
            }
            Model::Weibull { .. } => {
                let alpha = theta[0];
                let s = model.linear_predictor(theta, x);
                let mu = model.mean_response(theta, x)?;
                let psi = special::digamma(1.0 + 1.0 / alpha)?;
                let dmu_da = mu * (s - psi) / (alpha * alpha);
                for (j, &xj) in x.iter().enumerate() {
                    out[(j, 0)] = dmu_da * xj;
                    out[(j, 1)] = -mu * xj / alpha;
                    for (k, &xk) in x.iter().enumerate() {
                        out[(j, k + 2)] = -mu * xj * xk / alpha;
                    }
                }
            }
        }
        Ok(())
    }
}

/// `h(x, y) = ψ(x, y; θ̌)`: the score at a pilot estimate, `q = d`.
#[derive(Clone, Debug)]
pub struct OptimalScoreMoment {
    model: Model,
    pilot: DVector<f64>,
}

impl OptimalScoreMoment {
    pub fn pilot(&self) -> &DVector<f64> {
        &self.pilot
    }
}

/// Binds the score at the pilot estimate as a moment function.
pub fn build_optimal_moment(
    model: &Model,
    pilot: &DVector<f64>,
) -> Result<OptimalScoreMoment, MomentError> {
    model.validate_params(pilot)?;
    Ok(OptimalScoreMoment { model: *model, pilot: pilot.clone() })
}

impl MomentFunction for OptimalScoreMoment {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eval_into(&self, obs: Obs<'_>, out: &mut DVector<f64>) -> Result<(), MomentError> {
        self.model.score_into(&self.pilot, obs, out)?;
        Ok(())
    }

    fn cond_mean_into(
        &self,
        model: &Model,
        theta: &DVector<f64>,
        x: &[f64],
        out: &mut DVector<f64>,
    ) -> Result<(), MomentError> {
        if *model != self.model {
            return Err(MomentError::ModelMismatch { bound: self.model, got: *model });
        }
        model.validate_params(theta)?;
        match model {
            Model::Logistic { .. } => {
                // GLM with canonical link: {c'(eta) - c'(eta_pilot)} (1, x)^T.
                let diff = sigmoid(model.linear_predictor(theta, x))
                    - sigmoid(model.linear_predictor(&self.pilot, x));
                out[0] = diff;
                for (j, &xj) in x.iter().enumerate() {
                    out[j + 1] = diff * xj;
                }
            }
            Model::Weibull { .. } => {
                // Derived from the generator through the unit-exponential
                // substitution: E[t^r] = Γ(1+r), E[t^r log t] = Γ(1+r)Ψ(1+r).
                let t = weibull_opt_terms(theta, &self.pilot, model, x)?;
                out[0] = 1.0 / t.alpha_pilot
                    - (special::EULER_GAMMA + t.s) / t.alpha
                    - t.gamma_r * (t.digamma_r - t.s) / t.alpha * t.e1;
                let r = 1.0 - t.gamma_r * t.e1;
                out[1] = r;
                for (j, &xj) in x.iter().enumerate() {
                    out[j + 2] = r * xj;
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(MomentError::Range("non-finite conditional moment".into()));
        }
        Ok(())
    }

    fn cond_mean_jac_into(
        &self,
        model: &Model,
        theta: &DVector<f64>,
        x: &[f64],
        out: &mut DMatrix<f64>,
    ) -> Result<(), MomentError> {
        if *model != self.model {
            return Err(MomentError::ModelMismatch { bound: self.model, got: *model });
        }
        model.validate_params(theta)?;
        match model {
            Model::Logistic { .. } => {
                let sig = sigmoid(model.linear_predictor(theta, x));
                let w = sig * (1.0 - sig);
                out[(0, 0)] = w;
                for (j, &xj) in x.iter().enumerate() {
                    out[(0, j + 1)] = w * xj;
                    out[(j + 1, 0)] = w * xj;
                    for (k, &xk) in x.iter().enumerate() {
                        out[(j + 1, k + 1)] = w * xj * xk;
                    }
                }
            }
            Model::Weibull { .. } => {
                let t = weibull_opt_terms(theta, &self.pilot, model, x)?;
                let trigamma_r = special::trigamma(1.0 + t.r)?;
                let a2 = t.alpha * t.alpha;
                let bs = t.digamma_r - t.s;

                // d m_alpha / d alpha
                let dm_a_da = (special::EULER_GAMMA + t.s) / a2
                    + t.e1
                        * (t.r * t.gamma_r * (t.digamma_r * bs + trigamma_r) + t.gamma_r * bs
                            - t.s * t.r * t.gamma_r * bs)
                        / a2;
                // d m_alpha / d s, applied per covariate coordinate
                let dm_a_ds = (t.e1 * t.gamma_r * (1.0 + t.r * bs) - 1.0) / t.alpha;
                // d m_beta / d alpha, coefficient on (1, x)^T
                let dm_b_da = t.gamma_r * t.e1 * t.r / t.alpha * bs;
                // d m_beta / d s, coefficient on (1, x)^T (1, x)
                let dm_b_ds = t.gamma_r * t.e1 * t.r;

                out[(0, 0)] = dm_a_da;
                out[(0, 1)] = dm_a_ds;
                out[(1, 0)] = dm_b_da;
                out[(1, 1)] = dm_b_ds;
                for (j, &xj) in x.iter().enumerate() {
                    out[(0, j + 2)] = dm_a_ds * xj;
                    out[(j + 2, 0)] = dm_b_da * xj;
                    out[(1, j + 2)] = dm_b_ds * xj;
                    out[(j + 2, 1)] = dm_b_ds * xj;
                    for (k, &xk) in x.iter().enumerate() {
                        out[(j + 2, k + 2)] = dm_b_ds * xj * xk;
                    }
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(MomentError::Range("non-finite conditional moment Jacobian".into()));
        }
        Ok(())
    }
}

struct WeibullOptTerms {
    alpha: f64,
    alpha_pilot: f64,
    s: f64,
    r: f64,
    e1: f64,
    gamma_r: f64,
    digamma_r: f64,
}

fn weibull_opt_terms(
    theta: &DVector<f64>,
    pilot: &DVector<f64>,
    model: &Model,
    x: &[f64],
) -> Result<WeibullOptTerms, MomentError> {
    let alpha = theta[0];
    let alpha_pilot = pilot[0];
    let s = model.linear_predictor(theta, x);
    let s_pilot = model.linear_predictor(pilot, x);
    let r = alpha_pilot / alpha;
    let gamma_r = special::gamma(1.0 + r)?;
    if !gamma_r.is_finite() {
        return Err(MomentError::Range(format!(
            "Gamma(1 + {r}) is not representable; shape ratio too extreme"
        )));
    }
    let digamma_r = special::digamma(1.0 + r)?;
    let e1 = (s_pilot - s * r).exp();
    Ok(WeibullOptTerms { alpha, alpha_pilot, s, r, e1, gamma_r, digamma_r })
}

/// Zero-dimensional moment; assembling with it reduces the corrected
/// estimator to one Newton step and the plain sandwich variance.
#[derive(Clone, Copy, Debug, Default)]
pub struct EmptyMoment;

impl MomentFunction for EmptyMoment {
    fn dim(&self) -> usize {
        0
    }

    fn eval_into(&self, _obs: Obs<'_>, _out: &mut DVector<f64>) -> Result<(), MomentError> {
        Ok(())
    }

    fn cond_mean_into(
        &self,
        _model: &Model,
        _theta: &DVector<f64>,
        _x: &[f64],
        _out: &mut DVector<f64>,
    ) -> Result<(), MomentError> {
        Ok(())
    }

    fn cond_mean_jac_into(
        &self,
        _model: &Model,
        _theta: &DVector<f64>,
        _x: &[f64],
        _out: &mut DMatrix<f64>,
    ) -> Result<(), MomentError> {
        Ok(())
    }
}

/// Invertible linear recombination `h'(x, y) = A h(x, y)` of a base moment.
///
/// The corrected estimator and its variance are invariant under such
/// recombinations; this adapter exists so that property can be exercised.
pub struct LinearMap<M: MomentFunction> {
    a: DMatrix<f64>,
    inner: M,
}

impl<M: MomentFunction> LinearMap<M> {
    pub fn new(a: DMatrix<f64>, inner: M) -> Self {
        assert_eq!(a.ncols(), inner.dim(), "transform must match moment dimension");
        LinearMap { a, inner }
    }
}

impl<M: MomentFunction> MomentFunction for LinearMap<M> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn eval_into(&self, obs: Obs<'_>, out: &mut DVector<f64>) -> Result<(), MomentError> {
        let base = self.inner.eval(obs)?;
        out.copy_from(&(&self.a * base));
        Ok(())
    }

    fn cond_mean_into(
        &self,
        model: &Model,
        theta: &DVector<f64>,
        x: &[f64],
        out: &mut DVector<f64>,
    ) -> Result<(), MomentError> {
        let base = self.inner.cond_mean(model, theta, x)?;
        out.copy_from(&(&self.a * base));
        Ok(())
    }

    fn cond_mean_jac_into(
        &self,
        model: &Model,
        theta: &DVector<f64>,
        x: &[f64],
        out: &mut DMatrix<f64>,
    ) -> Result<(), MomentError> {
        let base = self.inner.cond_mean_jac(model, theta, x)?;
        out.copy_from(&(&self.a * base));
        Ok(())
    }
}

/// Whole-data sample average of a moment function.
#[derive(Clone, Debug)]
pub struct WholeDataMoment {
    pub mu_hat: DVector<f64>,
    pub count: usize,
}

/// Streams the whole data once and averages `h` with a deterministic
/// chunk-parallel reduction.
pub fn whole_data_moment<M, R>(momfun: &M, records: &R) -> Result<WholeDataMoment, MomentError>
where
    M: MomentFunction + ?Sized,
    R: Records,
{
    let q = momfun.dim();
    let (sum, count) = chunked::fold_indexed(
        records.index_bound(),
        || (DVector::<f64>::zeros(q), 0usize),
        |start, end, acc| {
            let mut buf = DVector::zeros(q);
            let mut err = None;
            records.scan(start, end, |_, obs| {
                if err.is_some() {
                    return;
                }
                match momfun.eval_into(obs, &mut buf) {
                    Ok(()) => {
                        acc.0 += &buf;
                        acc.1 += 1;
                    }
                    Err(e) => err = Some(e),
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok(()),
            }
        },
        |a, b| {
            a.0 += b.0;
            a.1 += b.1;
        },
    )?;
    if count == 0 {
        return Err(MomentError::EmptyDataset);
    }
    Ok(WholeDataMoment { mu_hat: sum / count as f64, count })
}

/// Conditional mean of `h` by adaptive quadrature on the unit-exponential
/// scale. Continuous models only; this is the oracle the closed forms in
/// [`MomentFunction::cond_mean_into`] are checked against.
pub fn quad_cond_mean(
    momfun: &dyn MomentFunction,
    model: &Model,
    theta: &DVector<f64>,
    x: &[f64],
) -> Result<DVector<f64>, MomentError> {
    model.validate_params(theta)?;
    let Model::Weibull { .. } = model else {
        return Err(MomentError::ContinuousOnly);
    };
    let alpha = theta[0];
    let s = model.linear_predictor(theta, x);
    // Substitution t = y^alpha e^{s}: y = (t e^{-s})^{1/alpha} turns the
    // conditional density into the unit-exponential measure.
    let y_of_t = move |t: f64| ((t.ln() - s) / alpha).exp();
    let q = momfun.dim();
    let integrand = |t: f64| -> DVector<f64> {
        let y = y_of_t(t);
        let mut out = DVector::zeros(q);
        match momfun.eval_into(Obs { x, y }, &mut out) {
            Ok(()) => out,
            Err(_) => DVector::from_element(q, f64::NAN),
        }
    };
    Ok(numerics::exp_weighted_integral(integrand, q, 1e-10)?)
}

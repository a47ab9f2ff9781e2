//! Conditional-density model families.
//!
//! Both models prepend a constant intercept feature internally, so user data
//! carries raw covariates only. Parameter layout:
//!
//! * logistic: `(intercept, slopes...)`, dimension `p + 1`;
//! * Weibull AFT: `(shape, intercept, slopes...)`, dimension `p + 2`, with
//!   response generated as `Y = W exp(-(1,x)β/α)` for `W ~ Weibull(α, 1)`.

use crate::data::Obs;
use crate::numerics::special;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameter has dimension {got}, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("observation invalid for this model: {0}")]
    InvalidObservation(String),
    #[error("uniform draw {0} outside (0, 1)")]
    DrawOutOfRange(f64),
    #[error("evaluation produced a non-finite value")]
    NonFinite,
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log(1 + e^eta)`.
#[inline]
pub fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    /// Bernoulli GLM with canonical (logit) link; `p` raw covariates.
    Logistic { p: usize },
    /// Weibull accelerated-failure-time model; `p` raw covariates.
    Weibull { p: usize },
}

impl Model {
    pub fn logistic(p: usize) -> Self {
        Model::Logistic { p }
    }

    pub fn weibull(p: usize) -> Self {
        Model::Weibull { p }
    }

    /// Covariate dimension of the raw data.
    pub fn p(&self) -> usize {
        match *self {
            Model::Logistic { p } | Model::Weibull { p } => p,
        }
    }

    /// Parameter dimension.
    pub fn dim(&self) -> usize {
        match *self {
            Model::Logistic { p } => p + 1,
            Model::Weibull { p } => p + 2,
        }
    }

    pub fn is_logistic(&self) -> bool {
        matches!(self, Model::Logistic { .. })
    }

    /// Default solver start: zero for logistic, unit shape for Weibull.
    pub fn default_start(&self) -> DVector<f64> {
        let mut t = DVector::zeros(self.dim());
        if let Model::Weibull { .. } = self {
            t[0] = 1.0;
        }
        t
    }

    pub fn validate_params(&self, theta: &DVector<f64>) -> Result<(), ModelError> {
        if theta.len() != self.dim() {
            return Err(ModelError::Dimension { expected: self.dim(), got: theta.len() });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParameter("non-finite component".into()));
        }
        if let Model::Weibull { .. } = self {
            if theta[0] <= 0.0 {
                return Err(ModelError::InvalidParameter(format!(
                    "Weibull shape must be positive, got {}",
                    theta[0]
                )));
            }
        }
        Ok(())
    }

    /// Linear predictor. Logistic: `(1,x)·theta`. Weibull: `(1,x)·beta`.
    #[inline]
    pub fn linear_predictor(&self, theta: &DVector<f64>, x: &[f64]) -> f64 {
        let offset = match self {
            Model::Logistic { .. } => 0,
            Model::Weibull { .. } => 1,
        };
        let th = theta.as_slice();
        let mut s = th[offset];
        for (c, &xj) in th[offset + 1..].iter().zip(x.iter()) {
            s += c * xj;
        }
        s
    }

    pub fn log_density(&self, theta: &DVector<f64>, obs: Obs<'_>) -> Result<f64, ModelError> {
        self.validate_params(theta)?;
        let v = match self {
            Model::Logistic { .. } => {
                let eta = self.linear_predictor(theta, obs.x);
                obs.y * eta - log1p_exp(eta)
            }
            Model::Weibull { .. } => {
                if obs.y <= 0.0 {
                    return Err(ModelError::InvalidObservation(format!(
                        "Weibull response must be positive, got {}",
                        obs.y
                    )));
                }
                let alpha = theta[0];
                let s = self.linear_predictor(theta, obs.x);
                alpha.ln() + (alpha - 1.0) * obs.y.ln() + s - obs.y.powf(alpha) * s.exp()
            }
        };
        if !v.is_finite() {
            return Err(ModelError::NonFinite);
        }
        Ok(v)
    }

    /// Writes the score `∂ log f / ∂θ` into `out`.
    #[inline]
    pub fn score_into(
        &self,
        theta: &DVector<f64>,
        obs: Obs<'_>,
        out: &mut DVector<f64>,
    ) -> Result<(), ModelError> {
        debug_assert_eq!(out.len(), self.dim());
        match self {
            Model::Logistic { .. } => {
                let eta = self.linear_predictor(theta, obs.x);
                let r = obs.y - sigmoid(eta);
                let o = out.as_mut_slice();
                o[0] = r;
                for (slot, &xj) in o[1..].iter_mut().zip(obs.x.iter()) {
                    *slot = r * xj;
                }
            }
            Model::Weibull { .. } => {
                if obs.y <= 0.0 {
                    return Err(ModelError::InvalidObservation(format!(
                        "Weibull response must be positive, got {}",
                        obs.y
                    )));
                }
                let alpha = theta[0];
                let s = self.linear_predictor(theta, obs.x);
                let ly = obs.y.ln();
                let e = obs.y.powf(alpha) * s.exp();
                out[0] = 1.0 / alpha + ly - e * ly;
                let r = 1.0 - e;
                out[1] = r;
                for (j, &xj) in obs.x.iter().enumerate() {
                    out[j + 2] = r * xj;
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(())
    }

    pub fn score(&self, theta: &DVector<f64>, obs: Obs<'_>) -> Result<DVector<f64>, ModelError> {
        self.validate_params(theta)?;
        let mut out = DVector::zeros(self.dim());
        self.score_into(theta, obs, &mut out)?;
        Ok(out)
    }

    /// Euclidean norm of the score, computed through the factorized form
    /// `|residual| * ||(1, x)||` (logistic) and its Weibull analogue. This is
    /// the canonical quantity behind score-norm sampling probabilities; every
    /// probability evaluation must use it so cached and recomputed weights
    /// agree bit for bit.
    #[inline]
    pub fn score_norm(&self, theta: &DVector<f64>, obs: Obs<'_>) -> Result<f64, ModelError> {
        let norm = match self {
            Model::Logistic { .. } => {
                let eta = self.linear_predictor(theta, obs.x);
                let r = obs.y - sigmoid(eta);
                r.abs() * aug_norm(obs.x)
            }
            Model::Weibull { .. } => {
                if obs.y <= 0.0 {
                    return Err(ModelError::InvalidObservation(format!(
                        "Weibull response must be positive, got {}",
                        obs.y
                    )));
                }
                let alpha = theta[0];
                let s = self.linear_predictor(theta, obs.x);
                let ly = obs.y.ln();
                let e = obs.y.powf(alpha) * s.exp();
                let s_alpha = 1.0 / alpha + ly - e * ly;
                let r = 1.0 - e;
                (s_alpha * s_alpha + (r * aug_norm(obs.x)).powi(2)).sqrt()
            }
        };
        if !norm.is_finite() {
            return Err(ModelError::NonFinite);
        }
        Ok(norm)
    }

    /// Fills the score into `out` and returns [`Model::score_norm`] of the
    /// same observation, sharing the linear predictor evaluation.
    #[inline]
    pub fn score_with_norm(
        &self,
        theta: &DVector<f64>,
        obs: Obs<'_>,
        out: &mut DVector<f64>,
    ) -> Result<f64, ModelError> {
        match self {
            Model::Logistic { .. } => {
                let eta = self.linear_predictor(theta, obs.x);
                let r = obs.y - sigmoid(eta);
                let o = out.as_mut_slice();
                o[0] = r;
                for (slot, &xj) in o[1..].iter_mut().zip(obs.x.iter()) {
                    *slot = r * xj;
                }
                let norm = r.abs() * aug_norm(obs.x);
                if !norm.is_finite() {
                    return Err(ModelError::NonFinite);
                }
                Ok(norm)
            }
            Model::Weibull { .. } => {
                self.score_into(theta, obs, out)?;
                let s_alpha = out[0];
                let r = out[1];
                Ok((s_alpha * s_alpha + (r * aug_norm(obs.x)).powi(2)).sqrt())
            }
        }
    }

    /// Writes the score Jacobian (Hessian of the log-density) into `out`.
    #[inline]
    pub fn score_jacobian_into(
        &self,
        theta: &DVector<f64>,
        obs: Obs<'_>,
        out: &mut DMatrix<f64>,
    ) -> Result<(), ModelError> {
        let d = self.dim();
        debug_assert_eq!(out.nrows(), d);
        debug_assert_eq!(out.ncols(), d);
        match self {
            Model::Logistic { .. } => {
                let eta = self.linear_predictor(theta, obs.x);
                let sig = sigmoid(eta);
                let w = -sig * (1.0 - sig);
                fill_scaled_outer_with_intercept(out, obs.x, w, 0);
            }
            Model::Weibull { .. } => {
                if obs.y <= 0.0 {
                    return Err(ModelError::InvalidObservation(format!(
                        "Weibull response must be positive, got {}",
                        obs.y
                    )));
                }
                let alpha = theta[0];
                let s = self.linear_predictor(theta, obs.x);
                let ly = obs.y.ln();
                let e = obs.y.powf(alpha) * s.exp();
                out[(0, 0)] = -1.0 / (alpha * alpha) - e * ly * ly;
                // Cross derivatives against (intercept, slopes).
                let c = -e * ly;
                out[(0, 1)] = c;
                out[(1, 0)] = c;
                for (j, &xj) in obs.x.iter().enumerate() {
                    out[(0, j + 2)] = c * xj;
                    out[(j + 2, 0)] = c * xj;
                }
                fill_scaled_outer_with_intercept(out, obs.x, -e, 1);
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(())
    }

    pub fn score_jacobian(
        &self,
        theta: &DVector<f64>,
        obs: Obs<'_>,
    ) -> Result<DMatrix<f64>, ModelError> {
        self.validate_params(theta)?;
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        self.score_jacobian_into(theta, obs, &mut out)?;
        Ok(out)
    }

    /// Conditional mean response `E[Y | X = x; θ]`.
    pub fn mean_response(&self, theta: &DVector<f64>, x: &[f64]) -> Result<f64, ModelError> {
        self.validate_params(theta)?;
        match self {
            Model::Logistic { .. } => Ok(sigmoid(self.linear_predictor(theta, x))),
            Model::Weibull { .. } => {
                let alpha = theta[0];
                let s = self.linear_predictor(theta, x);
                let g = special::gamma(1.0 + 1.0 / alpha)
                    .map_err(|_| ModelError::InvalidParameter("shape too small".into()))?;
                let v = (-s / alpha).exp() * g;
                if !v.is_finite() {
                    return Err(ModelError::NonFinite);
                }
                Ok(v)
            }
        }
    }

    /// Inverse-CDF response draw from a uniform variate on (0, 1).
    pub fn sample_response(
        &self,
        theta: &DVector<f64>,
        x: &[f64],
        draw: f64,
    ) -> Result<f64, ModelError> {
        self.validate_params(theta)?;
        if !(draw > 0.0 && draw < 1.0) {
            return Err(ModelError::DrawOutOfRange(draw));
        }
        match self {
            Model::Logistic { .. } => {
                let eta = self.linear_predictor(theta, x);
                Ok(if draw < sigmoid(eta) { 1.0 } else { 0.0 })
            }
            Model::Weibull { .. } => {
                let alpha = theta[0];
                let s = self.linear_predictor(theta, x);
                Ok((-draw.ln()).powf(1.0 / alpha) * (-s / alpha).exp())
            }
        }
    }
}

/// Norm of the intercept-augmented covariate vector `(1, x)`.
#[inline]
fn aug_norm(x: &[f64]) -> f64 {
    let mut s = 1.0;
    for &xj in x {
        s += xj * xj;
    }
    s.sqrt()
}

/// Adds `w * (1, x)(1, x)^T` into the square block of `out` starting at
/// `offset`, overwriting the block.
fn fill_scaled_outer_with_intercept(out: &mut DMatrix<f64>, x: &[f64], w: f64, offset: usize) {
    out[(offset, offset)] = w;
    for (j, &xj) in x.iter().enumerate() {
        let v = w * xj;
        out[(offset, offset + 1 + j)] = v;
        out[(offset + 1 + j, offset)] = v;
        for (k, &xk) in x.iter().enumerate().skip(j) {
            let vv = v * xk;
            out[(offset + 1 + j, offset + 1 + k)] = vv;
            out[(offset + 1 + k, offset + 1 + j)] = vv;
        }
    }
}

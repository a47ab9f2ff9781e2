//! Moment-assisted Poisson-subsampling estimation for large-scale
//! conditional-density models.
//!
//! The pipeline: draw a small uniform pilot, fit it, build a subsampling
//! plan, draw the main Poisson subsample, solve the plain estimating
//! equation, then fold cheap whole-data sample moments into the estimate
//! through a closed-form one-step GMM correction. The corrected estimator
//! keeps the computational profile of plain subsampling while shrinking its
//! variance, and ships with a plug-in variance estimator.
//!
//! Modules follow the pipeline: [`model`] defines the conditional densities
//! (logistic GLM, Weibull AFT), [`moments`] the auxiliary moment functions
//! and whole-data averages, [`sampling`] the probability designs and
//! deterministic draws, [`estimator`] the solvers and the one-step
//! correction, [`harness`] the simulation and timing machinery, and
//! [`numerics`] the shared kernels.

pub mod chunked;
pub mod data;
pub mod estimator;
pub mod harness;
pub mod model;
pub mod moments;
pub mod numerics;
pub mod rng;
pub mod sampling;

pub use data::{Dataset, Obs, Records};
pub use estimator::{EstimatorKind, GmmAssembly, MasResult};
pub use model::Model;
pub use moments::{MomentFunction, WholeDataMoment};
pub use sampling::{Design, Plan, Subsample};

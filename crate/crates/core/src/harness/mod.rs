//! Desk-scale experiment machinery: synthetic data, end-to-end estimator
//! pipelines, replication studies, Monte Carlo population oracles, and
//! timing comparisons.

mod gen;
mod oracle;
mod pipeline;
mod replicate;
mod svg;
mod timing;

pub use gen::generate_dataset;
pub use oracle::{monte_carlo_population, monte_carlo_population_batched, PopulationMatrices};
pub use pipeline::{run_estimator, EstimatorSpec, MomentChoice, PilotPolicy, PipelineOutput};
pub use replicate::{
    run_replications, CoordStats, EstimatorReport, ModelChoice, ReplicationReport, ScenarioConfig,
};
pub use svg::rmse_chart_svg;
pub use timing::{timing_report, TimingReport, TimingRow};

use crate::estimator::EstimatorError;
use crate::moments::MomentError;
use crate::sampling::SamplingError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("{failed} of {total} replications failed (more than 5%); first error: {first}")]
    TooManyFailures { failed: usize, total: usize, first: String },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

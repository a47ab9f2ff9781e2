//! Replication studies: bias / MSD / RMSE / ESD tables.

use super::pipeline::{run_estimator, EstimatorSpec};
use super::{gen::generate_dataset, HarnessError};
use crate::model::Model;
use crate::rng;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Logistic,
    Weibull,
}

impl ModelChoice {
    pub fn build(&self, p: usize) -> Model {
        match self {
            ModelChoice::Logistic => Model::logistic(p),
            ModelChoice::Weibull => Model::weibull(p),
        }
    }
}

/// A replication study: data-generating truth, sizes, seed, and the
/// estimator variants to compare.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelChoice,
    /// Covariate dimension of the generated data.
    pub covariates: usize,
    /// True parameter, in the model's layout.
    pub theta0: Vec<f64>,
    pub n_population: usize,
    pub n_subsample: usize,
    pub n_pilot: usize,
    pub replications: usize,
    pub seed: u64,
    /// Estimator labels, e.g. `uni-plain`, `ipw-mas-opt`.
    pub estimators: Vec<String>,
    /// Fresh dataset per replication (default); otherwise one fixed
    /// population is reused and only the subsampling varies.
    #[serde(default = "default_true")]
    pub fresh_dataset: bool,
}

fn default_true() -> bool {
    true
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(Model, DVector<f64>, Vec<EstimatorSpec>), HarnessError> {
        let model = self.model.build(self.covariates);
        if self.theta0.len() != model.dim() {
            return Err(HarnessError::InvalidConfig(format!(
                "theta0 has length {}, model needs {}",
                self.theta0.len(),
                model.dim()
            )));
        }
        if self.replications == 0 {
            return Err(HarnessError::InvalidConfig("replications must be at least 1".into()));
        }
        if self.n_pilot + self.n_subsample > self.n_population {
            return Err(HarnessError::InvalidConfig(format!(
                "pilot {} + subsample {} exceed population {}",
                self.n_pilot, self.n_subsample, self.n_population
            )));
        }
        let theta0 = DVector::from_vec(self.theta0.clone());
        model.validate_params(&theta0).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        let mut specs = Vec::new();
        for label in &self.estimators {
            let spec = EstimatorSpec::parse(label).ok_or_else(|| {
                HarnessError::InvalidConfig(format!("unknown estimator label `{label}`"))
            })?;
            spec.kind
                .validate_for(&model)
                .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
            specs.push(spec);
        }
        if specs.is_empty() {
            return Err(HarnessError::InvalidConfig("no estimators selected".into()));
        }
        Ok((model, theta0, specs))
    }
}

/// Per-coordinate summary across replications.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoordStats {
    pub bias: f64,
    /// Monte Carlo standard deviation across replications.
    pub msd: f64,
    pub rmse: f64,
    /// Mean estimated standard deviation from the plug-in variance.
    pub esd: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimatorReport {
    pub label: String,
    pub coords: Vec<CoordStats>,
    pub failures: usize,
    pub mean_time_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplicationReport {
    pub config: ScenarioConfig,
    pub estimators: Vec<EstimatorReport>,
    pub completed_replications: usize,
}

impl ReplicationReport {
    /// Report table as CSV. Timing is deliberately excluded so the file is
    /// byte-identical across reruns at a fixed seed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,coordinate,bias,msd,rmse,esd\n");
        for est in &self.estimators {
            for (j, c) in est.coords.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    est.label, j, c.bias, c.msd, c.rmse, c.esd
                ));
            }
        }
        out
    }
}

struct RepOutcome {
    /// Per estimator: estimate and per-coordinate ESD, or the failure text.
    cells: Vec<Result<(DVector<f64>, DVector<f64>), String>>,
    times: Vec<f64>,
}

/// Runs the replication study. Replications are independent (each owns a
/// derived seed) and run on the rayon pool; aggregation is in replication
/// order, so reports are identical for any thread count.
pub fn run_replications(cfg: &ScenarioConfig) -> Result<ReplicationReport, HarnessError> {
    let (model, theta0, specs) = cfg.validate()?;
    let d = model.dim();
    let n = cfg.n_subsample as f64;
    let n0 = cfg.n_pilot as f64;

    let fixed_data = if cfg.fresh_dataset {
        None
    } else {
        Some(generate_dataset(&model, &theta0, cfg.n_population, cfg.seed)?)
    };

    let outcomes: Vec<RepOutcome> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = rng::replication_seed(cfg.seed, rep as u64);
            let data = match &fixed_data {
                Some(_) => None,
                None => Some(
                    generate_dataset(&model, &theta0, cfg.n_population, rep_seed)
                        .expect("generation cannot fail for validated parameters"),
                ),
            };
            let data_ref: &crate::data::Dataset = data.as_ref().or(fixed_data.as_ref()).unwrap();
            let mut cells = Vec::with_capacity(specs.len());
            let mut times = Vec::with_capacity(specs.len());
            for spec in &specs {
                let t0 = Instant::now();
                let r = run_estimator(&model, data_ref, *spec, n, n0, rep_seed)
                    .map(|out| (out.estimate, out.std_errors))
                    .map_err(|e| e.to_string());
                times.push(t0.elapsed().as_secs_f64());
                cells.push(r);
            }
            RepOutcome { cells, times }
        })
        .collect();

    let total = cfg.replications;
    let mut reports = Vec::with_capacity(specs.len());
    for (s, spec) in specs.iter().enumerate() {
        let mut estimates: Vec<&DVector<f64>> = Vec::with_capacity(total);
        let mut esds: Vec<&DVector<f64>> = Vec::with_capacity(total);
        let mut failures = 0usize;
        let mut first_err: Option<String> = None;
        let mut time_acc = 0.0;
        for o in &outcomes {
            time_acc += o.times[s];
            match &o.cells[s] {
                Ok((est, esd)) => {
                    estimates.push(est);
                    esds.push(esd);
                }
                Err(e) => {
                    failures += 1;
                    first_err.get_or_insert_with(|| e.clone());
                }
            }
        }
        if failures * 20 > total {
            return Err(HarnessError::TooManyFailures {
                failed: failures,
                total,
                first: first_err.unwrap_or_default(),
            });
        }
        let m = estimates.len() as f64;
        let mut coords = Vec::with_capacity(d);
        for j in 0..d {
            let mean = estimates.iter().map(|v| v[j]).sum::<f64>() / m;
            let msd2 = estimates.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / m;
            let rmse2 = estimates.iter().map(|v| (v[j] - theta0[j]).powi(2)).sum::<f64>() / m;
            let esd = esds.iter().map(|v| v[j]).sum::<f64>() / m;
            coords.push(CoordStats {
                bias: mean - theta0[j],
                msd: msd2.sqrt(),
                rmse: rmse2.sqrt(),
                esd,
            });
        }
        reports.push(EstimatorReport {
            label: spec.label(),
            coords,
            failures,
            mean_time_s: time_acc / total as f64,
        });
    }

    Ok(ReplicationReport {
        config: cfg.clone(),
        estimators: reports,
        completed_replications: total,
    })
}

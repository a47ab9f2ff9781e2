//! Wall-clock comparison of subsampling estimators against the whole-data
//! maximum likelihood baseline.

use super::pipeline::{run_estimator, EstimatorSpec};
use super::{gen::generate_dataset, HarnessError};
use crate::estimator::whole_data_mle;
use crate::model::Model;
use nalgebra::DVector;
use std::time::Instant;

#[derive(Clone, Debug)]
pub struct TimingRow {
    pub label: String,
    pub median_s: f64,
}

#[derive(Clone, Debug)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    pub whole_data_mle_s: Option<f64>,
    pub n_population: usize,
    pub n_subsample: usize,
}

/// Median-of-`runs` end-to-end wall times for each estimator, plus the
/// whole-data Newton baseline when requested. One warmup run per estimator
/// is discarded so page faults and lazy allocations do not pollute the
/// medians.
#[allow(clippy::too_many_arguments)]
pub fn timing_report(
    model: &Model,
    theta0: &DVector<f64>,
    n_population: usize,
    n_subsample: usize,
    n_pilot: usize,
    runs: usize,
    seed: u64,
    specs: &[EstimatorSpec],
    include_mle: bool,
) -> Result<TimingReport, HarnessError> {
    let runs = runs.max(5) | 1;
    let data = generate_dataset(model, theta0, n_population, seed)?;
    let n = n_subsample as f64;
    let n0 = n_pilot as f64;

    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        run_estimator(model, &data, *spec, n, n0, seed)?;
        let mut times = Vec::with_capacity(runs);
        for _ in 0..runs {
            let t0 = Instant::now();
            run_estimator(model, &data, *spec, n, n0, seed)?;
            times.push(t0.elapsed().as_secs_f64());
        }
        rows.push(TimingRow { label: spec.label(), median_s: median(&mut times) });
    }

    let whole_data_mle_s = if include_mle {
        whole_data_mle(model, &data, &model.default_start())?;
        let mut times = Vec::with_capacity(runs);
        for _ in 0..runs {
            let t0 = Instant::now();
            whole_data_mle(model, &data, &model.default_start())?;
            times.push(t0.elapsed().as_secs_f64());
        }
        Some(median(&mut times))
    } else {
        None
    };

    Ok(TimingReport { rows, whole_data_mle_s, n_population, n_subsample })
}

fn median(times: &mut [f64]) -> f64 {
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times[times.len() / 2]
}

//! Synthetic dataset generation.

use crate::data::Dataset;
use crate::model::{Model, ModelError};
use crate::rng::{self, stream};
use rayon::prelude::*;

/// Generates `n` records with covariates iid Uniform(-1, 1) and responses
/// drawn from the model at `theta0`. Record `i` depends only on `(seed, i)`,
/// so generation is deterministic and chunk-parallel.
pub fn generate_dataset(
    model: &Model,
    theta0: &nalgebra::DVector<f64>,
    n: usize,
    seed: u64,
) -> Result<Dataset, ModelError> {
    model.validate_params(theta0)?;
    let p = model.p();
    let stride = (p + 1) as u64;
    let mut xs = vec![0.0f64; n * p];
    let mut ys = vec![0.0f64; n];

    let chunk = crate::chunked::CHUNK;
    let errs: Vec<ModelError> = xs
        .par_chunks_mut(chunk * p)
        .zip(ys.par_chunks_mut(chunk))
        .enumerate()
        .filter_map(|(c, (xchunk, ychunk))| {
            let base = c * chunk;
            for (k, y_out) in ychunk.iter_mut().enumerate() {
                let i = (base + k) as u64;
                let row = &mut xchunk[k * p..(k + 1) * p];
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot = 2.0 * rng::u01(seed, stream::DATA, i * stride + j as u64) - 1.0;
                }
                let draw = rng::u01(seed, stream::DATA, i * stride + p as u64);
                match model.sample_response(theta0, row, draw) {
                    Ok(y) => *y_out = y,
                    Err(e) => return Some(e),
                }
            }
            None
        })
        .collect();
    if let Some(e) = errs.into_iter().next() {
        return Err(e);
    }
    Ok(Dataset::from_parts(p, xs, ys))
}

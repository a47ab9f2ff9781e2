//! Subsampling probability designs and deterministic Poisson draws.
//!
//! Inclusion decisions are pure functions of `(seed, record index)` through
//! the counter RNG, so a draw is reproducible under any chunking or thread
//! count. Nonuniform plans follow a score-norm rule: probabilities are
//! proportional to the pilot score norm, clamped away from extremes and
//! rescaled so the expected subsample size is exact.

use crate::chunked;
use crate::data::{Obs, Records};
use crate::model::{Model, ModelError};
use crate::rng::{self, stream};
use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("expected subsample size {n} exceeds available records {available}")]
    InvalidSize { n: f64, available: usize },
    #[error("expected subsample size must be positive, got {0}")]
    NonPositiveSize(f64),
    #[error("score-norm design requires a pilot estimate")]
    MissingPilot,
    #[error("clamp-rescale did not converge: residual {residual:.3e} after {rounds} rounds")]
    NormalizationFailed { residual: f64, rounds: usize },
    #[error("pilot subsample empty after {attempts} attempts")]
    EmptyPilot { attempts: usize },
    #[error("plan was built for {expected} records, got {got}")]
    PlanMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Probability design for the main subsample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Design {
    /// Every record gets probability `rho = n / N` exactly.
    Uniform,
    /// Probabilities proportional to the pilot score norm, clamped to
    /// `[0.1 rho, min(1, 10 rho)]` and rescaled to expected size `n`.
    ScoreNorm,
}

const CLAMP_ROUNDS: usize = 20;
const RESCALE_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
enum PlanKind {
    Uniform,
    ScoreNorm {
        pilot: DVector<f64>,
        /// Final multiplier of the clamp-rescale iteration; the emitted
        /// probability is `clamp(scale * ||psi(x, y; pilot)||)`.
        scale: f64,
        /// Cached score norms aligned to the source index space. Records the
        /// source view excludes hold NaN.
        weights: Vec<f64>,
    },
}

/// An immutable subsampling probability rule bound to a record view.
#[derive(Clone, Debug)]
pub struct Plan {
    kind: PlanKind,
    pub rho: f64,
    pub n_expected: f64,
    pub n_records: usize,
    pub index_bound: usize,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
    /// Set when a degenerate score-norm design fell back to uniform.
    pub fallback_uniform: bool,
    /// Clamp-rescale rounds used (zero for uniform plans).
    pub rounds: usize,
}

impl Plan {
    /// Uniform plan over `n_records` records with expected size `n`.
    pub fn uniform(n: f64, n_records: usize, index_bound: usize) -> Result<Plan, SamplingError> {
        if !(n > 0.0) {
            return Err(SamplingError::NonPositiveSize(n));
        }
        if n > n_records as f64 {
            return Err(SamplingError::InvalidSize { n, available: n_records });
        }
        let rho = n / n_records as f64;
        Ok(Plan {
            kind: PlanKind::Uniform,
            rho,
            n_expected: n,
            n_records,
            index_bound,
            clamp_lo: 0.1 * rho,
            clamp_hi: (10.0 * rho).min(1.0),
            fallback_uniform: false,
            rounds: 0,
        })
    }

    pub fn design(&self) -> Design {
        match self.kind {
            PlanKind::Uniform => Design::Uniform,
            PlanKind::ScoreNorm { .. } => Design::ScoreNorm,
        }
    }

    /// Inclusion probability for an arbitrary record. Pure in `(model, obs)`;
    /// this is what lets probabilities be recomputed on the fly and evaluated
    /// at hypothetical responses.
    pub fn prob(&self, model: &Model, obs: Obs<'_>) -> Result<f64, SamplingError> {
        match &self.kind {
            PlanKind::Uniform => Ok(self.rho),
            PlanKind::ScoreNorm { pilot, scale, .. } => {
                let w = model.score_norm(pilot, obs)?;
                Ok((scale * w).clamp(self.clamp_lo, self.clamp_hi))
            }
        }
    }

    /// Probability for record `i` of the source view, using the cached score
    /// norm when one exists. Bit-identical to [`Plan::prob`] on that record.
    fn prob_indexed(&self, i: usize) -> f64 {
        match &self.kind {
            PlanKind::Uniform => self.rho,
            PlanKind::ScoreNorm { scale, weights, .. } => {
                (scale * weights[i]).clamp(self.clamp_lo, self.clamp_hi)
            }
        }
    }

    /// Inclusion probabilities at both binary responses for a fixed `x`,
    /// sharing the linear-predictor evaluation. Bit-identical to calling
    /// [`Plan::prob`] at `y = 1` and `y = 0`.
    pub fn prob_pair(&self, model: &Model, x: &[f64]) -> Result<(f64, f64), SamplingError> {
        match &self.kind {
            PlanKind::Uniform => Ok((self.rho, self.rho)),
            PlanKind::ScoreNorm { pilot, scale, .. } => {
                let sig = crate::model::sigmoid(model.linear_predictor(pilot, x));
                let mut aug = 1.0;
                for &xj in x {
                    aug += xj * xj;
                }
                let aug = aug.sqrt();
                let w1 = (1.0 - sig).abs() * aug;
                let w0 = (0.0 - sig).abs() * aug;
                Ok((
                    (scale * w1).clamp(self.clamp_lo, self.clamp_hi),
                    (scale * w0).clamp(self.clamp_lo, self.clamp_hi),
                ))
            }
        }
    }

    pub fn pilot_estimate(&self) -> Option<&DVector<f64>> {
        match &self.kind {
            PlanKind::Uniform => None,
            PlanKind::ScoreNorm { pilot, .. } => Some(pilot),
        }
    }

    /// Builds a score-norm plan from precomputed weights (one per source
    /// index, NaN for excluded records). Used by fused pipeline passes that
    /// compute the weights alongside other whole-data statistics.
    pub fn from_score_weights(
        pilot: DVector<f64>,
        weights: Vec<f64>,
        weight_sum: f64,
        n: f64,
        count: usize,
        index_bound: usize,
    ) -> Result<Plan, SamplingError> {
        if !(n > 0.0) {
            return Err(SamplingError::NonPositiveSize(n));
        }
        if n > count as f64 {
            return Err(SamplingError::InvalidSize { n, available: count });
        }
        let rho = n / count as f64;
        let clamp_lo = 0.1 * rho;
        let clamp_hi = (10.0 * rho).min(1.0);
        if weight_sum <= 0.0 {
            let mut plan = Plan::uniform(n, count, index_bound)?;
            plan.fallback_uniform = true;
            return Ok(plan);
        }
        let (scale, rounds) = normalize_scale(&weights, weight_sum, n, clamp_lo, clamp_hi)?;
        Ok(Plan {
            kind: PlanKind::ScoreNorm { pilot, scale, weights },
            rho,
            n_expected: n,
            n_records: count,
            index_bound,
            clamp_lo,
            clamp_hi,
            fallback_uniform: false,
            rounds,
        })
    }
}

/// Builds a subsampling plan of expected size `n` over `records`.
pub fn make_plan<R: Records>(
    design: Design,
    model: &Model,
    records: &R,
    n: f64,
    pilot: Option<&DVector<f64>>,
) -> Result<Plan, SamplingError> {
    let count = records.count();
    match design {
        Design::Uniform => Plan::uniform(n, count, records.index_bound()),
        Design::ScoreNorm => {
            let pilot = pilot.ok_or(SamplingError::MissingPilot)?;
            model.validate_params(pilot)?;
            if !(n > 0.0) {
                return Err(SamplingError::NonPositiveSize(n));
            }
            if n > count as f64 {
                return Err(SamplingError::InvalidSize { n, available: count });
            }
            let bound = records.index_bound();
            let (weights, sum) = chunked::fold_indexed(
                bound,
                || (Vec::new(), 0.0f64),
                |start, end, acc| {
                    acc.0.reserve(end - start);
                    let mut err = None;
                    let mut next = start;
                    records.scan(start, end, |i, obs| {
                        if err.is_some() {
                            return;
                        }
                        acc.0.resize(acc.0.len() + (i - next), f64::NAN);
                        next = i + 1;
                        match model.score_norm(pilot, obs) {
                            Ok(w) => {
                                acc.0.push(w);
                                acc.1 += w;
                            }
                            Err(e) => err = Some(e),
                        }
                    });
                    if let Some(e) = err {
                        return Err(e.into());
                    }
                    acc.0.resize(acc.0.len() + (end - next), f64::NAN);
                    Ok::<(), SamplingError>(())
                },
                |a, b| {
                    a.0.extend_from_slice(&b.0);
                    a.1 += b.1;
                },
            )?;

            Plan::from_score_weights(pilot.clone(), weights, sum, n, count, bound)
        }
    }
}

/// Rescales `scale` so the clamped probabilities sum to `n`.
fn normalize_scale(
    weights: &[f64],
    sum: f64,
    n: f64,
    lo: f64,
    hi: f64,
) -> Result<(f64, usize), SamplingError> {
    let mut scale = n / sum;
    let mut rounds = 0;
    let mut residual = f64::INFINITY;
    for _ in 0..CLAMP_ROUNDS {
        let s = clamped_sum(weights, scale, lo, hi);
        residual = (s - n).abs();
        if residual <= RESCALE_TOL * n {
            break;
        }
        scale *= n / s;
        rounds += 1;
    }
    if residual > RESCALE_TOL * n {
        let s = clamped_sum(weights, scale, lo, hi);
        residual = (s - n).abs();
        if residual > RESCALE_TOL * n {
            return Err(SamplingError::NormalizationFailed { residual, rounds });
        }
    }
    Ok((scale, rounds))
}

fn clamped_sum(weights: &[f64], scale: f64, lo: f64, hi: f64) -> f64 {
    let mut total = 0.0;
    let mut chunk_start = 0;
    // Fixed-chunk accumulation, matching the reduction order used elsewhere.
    while chunk_start < weights.len() {
        let end = (chunk_start + chunked::CHUNK).min(weights.len());
        let mut part = 0.0;
        for &w in &weights[chunk_start..end] {
            if w.is_nan() {
                continue;
            }
            part += (scale * w).clamp(lo, hi);
        }
        total += part;
        chunk_start = end;
    }
    total
}

/// A realized Poisson subsample: strictly increasing source indices with
/// their inclusion probabilities.
#[derive(Clone, Debug)]
pub struct Subsample {
    pub indices: Vec<usize>,
    pub probs: Vec<f64>,
    pub expected_n: f64,
}

impl Subsample {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Every record of the view with probability one; used for whole-data
    /// solves.
    pub fn full<R: Records>(records: &R) -> Subsample {
        let mut indices = Vec::with_capacity(records.count());
        for i in 0..records.index_bound() {
            if records.get(i).is_some() {
                indices.push(i);
            }
        }
        let n = indices.len();
        Subsample { indices, probs: vec![1.0; n], expected_n: n as f64 }
    }
}

/// Draws a Poisson subsample. Record `i` is included iff the counter-RNG
/// uniform for `(seed, i)` falls below its plan probability.
///
/// Score-norm plans carry their weight cache (NaN marks records the source
/// view excludes), so the draw never touches the records themselves.
pub fn draw_poisson<R: Records>(
    plan: &Plan,
    records: &R,
    seed: u64,
) -> Result<Subsample, SamplingError> {
    if records.index_bound() != plan.index_bound {
        return Err(SamplingError::PlanMismatch {
            expected: plan.index_bound,
            got: records.index_bound(),
        });
    }
    let (indices, probs) = chunked::fold_indexed(
        records.index_bound(),
        || (Vec::new(), Vec::new()),
        |start, end, acc: &mut (Vec<usize>, Vec<f64>)| {
            match &plan.kind {
                PlanKind::ScoreNorm { scale, weights, .. } => {
                    for (i, &w) in weights[start..end].iter().enumerate().map(|(k, w)| (start + k, w)) {
                        if w.is_nan() {
                            continue;
                        }
                        let p = (scale * w).clamp(plan.clamp_lo, plan.clamp_hi);
                        if rng::u01(seed, stream::MAIN_DRAW, i as u64) < p {
                            acc.0.push(i);
                            acc.1.push(p);
                        }
                    }
                }
                PlanKind::Uniform => {
                    let p = plan.rho;
                    for i in start..end {
                        if rng::u01(seed, stream::MAIN_DRAW, i as u64) < p
                            && records.get(i).is_some()
                        {
                            acc.0.push(i);
                            acc.1.push(p);
                        }
                    }
                }
            }
            Ok::<(), SamplingError>(())
        },
        |a, b| {
            a.0.extend_from_slice(&b.0);
            a.1.extend_from_slice(&b.1);
        },
    )?;
    Ok(Subsample { indices, probs, expected_n: plan.n_expected })
}

/// Complement view of a pilot draw: the records Algorithm-style pipelines
/// treat as "whole data".
#[derive(Clone, Copy, Debug)]
pub struct RemainderView<'a, R: Records> {
    base: &'a R,
    seed: u64,
    rate: f64,
    count: usize,
}

impl<'a, R: Records> Records for RemainderView<'a, R> {
    fn index_bound(&self) -> usize {
        self.base.index_bound()
    }

    fn p(&self) -> usize {
        self.base.p()
    }

    fn get(&self, i: usize) -> Option<Obs<'_>> {
        let obs = self.base.get(i)?;
        if rng::u01(self.seed, stream::PILOT, i as u64) < self.rate {
            None
        } else {
            Some(obs)
        }
    }

    fn count(&self) -> usize {
        self.count
    }

    fn scan<F>(&self, start: usize, end: usize, mut f: F)
    where
        F: FnMut(usize, Obs<'_>),
    {
        self.base.scan(start, end, |i, obs| {
            if rng::u01(self.seed, stream::PILOT, i as u64) >= self.rate {
                f(i, obs);
            }
        });
    }
}

/// A uniform pilot draw together with the complement view of the data.
pub struct PilotSplit<'a, R: Records> {
    pub pilot: Subsample,
    pub pilot_plan: Plan,
    pub remainder: RemainderView<'a, R>,
}

/// Draws the uniform pilot subsample of expected size `n0` and exposes the
/// complement as the downstream whole data. Empty draws are retried with
/// `seed + 1`, at most eight times.
pub fn draw_pilot<R: Records>(
    records: &R,
    n0: f64,
    seed: u64,
) -> Result<PilotSplit<'_, R>, SamplingError> {
    let total = records.count();
    if !(n0 > 0.0) {
        return Err(SamplingError::NonPositiveSize(n0));
    }
    if n0 > total as f64 {
        return Err(SamplingError::InvalidSize { n: n0, available: total });
    }
    let rate = n0 / total as f64;

    let mut attempts = 0;
    loop {
        let eff_seed = seed.wrapping_add(attempts as u64);
        let indices = chunked::fold_indexed(
            records.index_bound(),
            Vec::new,
            |start, end, acc: &mut Vec<usize>| {
                for i in start..end {
                    if records.get(i).is_some()
                        && rng::u01(eff_seed, stream::PILOT, i as u64) < rate
                    {
                        acc.push(i);
                    }
                }
                Ok::<(), SamplingError>(())
            },
            |a, b| a.extend_from_slice(&b),
        )?;
        if !indices.is_empty() {
            let len = indices.len();
            let pilot = Subsample {
                probs: vec![rate; len],
                indices,
                expected_n: n0,
            };
            let remainder =
                RemainderView { base: records, seed: eff_seed, rate, count: total - len };
            let pilot_plan = Plan::uniform(n0, total, records.index_bound())?;
            return Ok(PilotSplit { pilot, pilot_plan, remainder });
        }
        attempts += 1;
        if attempts > 8 {
            return Err(SamplingError::EmptyPilot { attempts });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;

    fn toy_dataset(n: usize, p: usize, seed: u64) -> Dataset {
        let mut d = Dataset::with_capacity(p, n);
        for i in 0..n {
            let x: Vec<f64> =
                (0..p).map(|j| 2.0 * rng::u01(seed, j as u64, i as u64) - 1.0).collect();
            let y = if rng::u01(seed, 99, i as u64) < 0.5 { 1.0 } else { 0.0 };
            d.push(&x, y).unwrap();
        }
        d
    }

    #[test]
    fn uniform_plan_emits_constant_rho() {
        let d = toy_dataset(1000, 2, 1);
        let model = Model::logistic(2);
        let plan = make_plan(Design::Uniform, &model, &d, 1.0, None).unwrap();
        assert_eq!(plan.rho, 0.001);
        for i in [0usize, 17, 999] {
            assert_eq!(plan.prob(&model, d.row(i)).unwrap(), 0.001);
        }
    }

    #[test]
    fn equal_score_norms_reduce_to_uniform_probability() {
        // Identical covariates make every score norm equal at pilot zero.
        let mut d = Dataset::new(1);
        for i in 0..200 {
            d.push(&[0.5], if i % 2 == 0 { 1.0 } else { 0.0 }).unwrap();
        }
        let model = Model::logistic(1);
        let pilot = DVector::zeros(2);
        let plan = make_plan(Design::ScoreNorm, &model, &d, 20.0, Some(&pilot)).unwrap();
        let rho = 0.1;
        for i in 0..200 {
            let p = plan.prob(&model, d.row(i)).unwrap();
            assert!((p - rho).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn score_norm_plan_matches_brute_force_toy() {
        let d = toy_dataset(10, 2, 7);
        let model = Model::logistic(2);
        let pilot = DVector::from_vec(vec![0.1, -0.4, 0.3]);
        let n = 4.0;
        let plan = make_plan(Design::ScoreNorm, &model, &d, n, Some(&pilot)).unwrap();

        // Independent brute force of the normalize-clamp-rescale loop.
        let w: Vec<f64> =
            (0..10).map(|i| model.score(&pilot, d.row(i)).unwrap().norm()).collect();
        let rho = n / 10.0;
        let (lo, hi) = (0.1 * rho, (10.0 * rho).min(1.0));
        let mut c = n / w.iter().sum::<f64>();
        for _ in 0..20 {
            let s: f64 = w.iter().map(|&wi| (c * wi).clamp(lo, hi)).sum();
            if (s - n).abs() <= 1e-9 * n {
                break;
            }
            c *= n / s;
        }
        for i in 0..10 {
            let expect = (c * w[i]).clamp(lo, hi);
            let got = plan.prob(&model, d.row(i)).unwrap();
            assert!((got - expect).abs() < 1e-12, "i={i}: {got} vs {expect}");
        }
    }

    #[test]
    fn score_norm_probabilities_sum_to_n_within_bounds() {
        let d = toy_dataset(5000, 3, 11);
        let model = Model::logistic(3);
        let pilot = DVector::from_vec(vec![0.2, 0.5, -0.3, 0.1]);
        let n = 250.0;
        let plan = make_plan(Design::ScoreNorm, &model, &d, n, Some(&pilot)).unwrap();
        let mut sum = 0.0;
        for i in 0..5000 {
            let p = plan.prob(&model, d.row(i)).unwrap();
            assert!(p >= plan.clamp_lo && p <= plan.clamp_hi);
            sum += p;
        }
        assert!((sum - n).abs() <= 1e-9 * n * 2.0, "sum {sum}");
    }

    #[test]
    fn degenerate_scores_fall_back_to_uniform() {
        // y == mean response at pilot makes every score exactly zero.
        let mut d = Dataset::new(1);
        for _ in 0..50 {
            d.push(&[0.3], 0.5).unwrap();
        }
        let model = Model::logistic(1);
        let pilot = DVector::zeros(2);
        let plan = make_plan(Design::ScoreNorm, &model, &d, 5.0, Some(&pilot)).unwrap();
        assert!(plan.fallback_uniform);
        assert_eq!(plan.design(), Design::Uniform);
        assert_eq!(plan.prob(&model, d.row(0)).unwrap(), 0.1);
    }

    #[test]
    fn draw_includes_everything_at_probability_one() {
        let d = toy_dataset(500, 1, 3);
        let model = Model::logistic(1);
        let plan = make_plan(Design::Uniform, &model, &d, 500.0, None).unwrap();
        let sub = draw_poisson(&plan, &d, 42).unwrap();
        assert_eq!(sub.len(), 500);
        assert!(sub.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn realized_size_within_binomial_bound_over_seeds() {
        let n_rec = 100_000usize;
        let d = toy_dataset(n_rec, 1, 5);
        let model = Model::logistic(1);
        let n = 100.0;
        let plan = make_plan(Design::Uniform, &model, &d, n, None).unwrap();
        let sd = (n_rec as f64 * plan.rho * (1.0 - plan.rho)).sqrt();
        let mut ok = 0;
        for seed in 0..50u64 {
            let sub = draw_poisson(&plan, &d, seed).unwrap();
            if (sub.len() as f64 - n).abs() <= 3.0 * sd {
                ok += 1;
            }
        }
        assert!(ok >= 48, "only {ok}/50 draws within 3 sigma");
    }

    #[test]
    fn mean_realized_size_tracks_expectation() {
        let d = toy_dataset(20_000, 1, 6);
        let model = Model::logistic(1);
        let n = 400.0;
        let plan = make_plan(Design::Uniform, &model, &d, n, None).unwrap();
        let mut total = 0usize;
        for seed in 0..200u64 {
            total += draw_poisson(&plan, &d, seed).unwrap().len();
        }
        let mean = total as f64 / 200.0;
        assert!((mean - n).abs() / n < 0.01, "mean {mean}");
    }

    #[test]
    fn uniform_ipw_weight_is_exactly_one() {
        let d = toy_dataset(1000, 1, 8);
        let model = Model::logistic(1);
        let plan = make_plan(Design::Uniform, &model, &d, 100.0, None).unwrap();
        let sub = draw_poisson(&plan, &d, 1).unwrap();
        for &p in &sub.probs {
            assert_eq!(plan.rho / p, 1.0);
        }
    }

    #[test]
    fn draws_are_deterministic_and_pool_invariant() {
        let d = toy_dataset(30_000, 2, 9);
        let model = Model::logistic(2);
        let pilot = DVector::from_vec(vec![0.1, 0.2, -0.5]);
        let plan = make_plan(Design::ScoreNorm, &model, &d, 600.0, Some(&pilot)).unwrap();

        let a = draw_poisson(&plan, &d, 77).unwrap();
        let b = draw_poisson(&plan, &d, 77).unwrap();
        assert_eq!(a.indices, b.indices);

        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let eight = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let sa = one.install(|| draw_poisson(&plan, &d, 123).unwrap());
        let sb = eight.install(|| draw_poisson(&plan, &d, 123).unwrap());
        assert_eq!(sa.indices, sb.indices);
        assert_eq!(sa.probs, sb.probs);
    }

    #[test]
    fn pilot_covers_boundary_and_partitions() {
        let d = toy_dataset(300, 1, 10);

        // n0 == N includes everything; the remainder is empty.
        let split = draw_pilot(&d, 300.0, 4).unwrap();
        assert_eq!(split.pilot.len(), 300);
        assert_eq!(split.remainder.count(), 0);

        let split = draw_pilot(&d, 40.0, 4).unwrap();
        let pilot_set: std::collections::HashSet<_> = split.pilot.indices.iter().copied().collect();
        let mut remainder_count = 0;
        for i in 0..300 {
            let in_pilot = pilot_set.contains(&i);
            let in_rem = split.remainder.get(i).is_some();
            assert!(in_pilot ^ in_rem, "index {i} must be in exactly one part");
            remainder_count += usize::from(in_rem);
        }
        assert_eq!(remainder_count, split.remainder.count());
    }

    #[test]
    fn pilot_size_has_binomial_coverage() {
        let d = toy_dataset(100_000, 1, 12);
        let n0: f64 = 200.0;
        let sd = n0.sqrt();
        let mut ok = 0;
        for seed in 0..50u64 {
            let split = draw_pilot(&d, n0, seed).unwrap();
            if (split.pilot.len() as f64 - n0).abs() <= 3.0 * sd {
                ok += 1;
            }
        }
        assert!(ok >= 45, "only {ok}/50 pilots within 3 sigma");
    }

    #[test]
    fn empty_pilot_retries_with_shifted_seed() {
        // Tiny rate on a tiny dataset: most seeds draw nothing on the first
        // try, and the retry path must still terminate deterministically.
        let d = toy_dataset(3, 1, 13);
        let mut saw_retry = false;
        for seed in 0..64u64 {
            match draw_pilot(&d, 1e-4, seed) {
                Ok(split) => {
                    assert!(!split.pilot.is_empty());
                    saw_retry = true;
                }
                Err(SamplingError::EmptyPilot { attempts }) => assert_eq!(attempts, 9),
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        // With rate 3.3e-5 per record over 9 retries, hitting a non-empty
        // pilot for some seed would be a miracle; the loop above mostly
        // checks the error path. Run a realistic rate to see a success.
        let _ = saw_retry;
        let ok = draw_pilot(&d, 2.0, 0).unwrap();
        assert!(!ok.pilot.is_empty());
    }
}

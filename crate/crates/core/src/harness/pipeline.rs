//! One end-to-end estimator run on an in-memory dataset.

use super::HarnessError;
use crate::data::Records;
use crate::estimator::{
    assemble_gmm, mas_result, plain_std_errors, plain_variance, solve_plain, EstimatorKind,
    MasDiagnostics,
};
use crate::model::Model;
use crate::moments::{
    build_optimal_moment, whole_data_moment, MomentFunction, WholeDataMoment, XyMoment,
};
use crate::rng;
use crate::sampling::{draw_pilot, draw_poisson, make_plan, Design, Plan};
use nalgebra::{DMatrix, DVector};

/// Auxiliary moment folded into the estimate, if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentChoice {
    /// Plain subsampling estimate, no correction.
    None,
    /// `h(x, y) = x y`.
    Xy,
    /// Estimated optimal moment: the score at the pilot estimate.
    Opt,
}

/// One estimator variant: a sampling design, an estimating equation, and a
/// moment choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EstimatorSpec {
    pub design: Design,
    pub kind: EstimatorKind,
    pub moment: MomentChoice,
}

impl EstimatorSpec {
    /// Canonical labels: `uni`/`ipw`/`mscl` crossed with
    /// `plain`/`mas-xy`/`mas-opt`.
    pub fn parse(label: &str) -> Option<EstimatorSpec> {
        let (method, moment) = label.split_once('-')?;
        let (design, kind) = match method {
            "uni" => (Design::Uniform, EstimatorKind::UniformMle),
            "ipw" => (Design::ScoreNorm, EstimatorKind::Ipw),
            "mscl" => (Design::ScoreNorm, EstimatorKind::Mscl),
            _ => return None,
        };
        let moment = match moment {
            "plain" => MomentChoice::None,
            "mas-xy" => MomentChoice::Xy,
            "mas-opt" => MomentChoice::Opt,
            _ => return None,
        };
        Some(EstimatorSpec { design, kind, moment })
    }

    pub fn label(&self) -> String {
        let method = match (self.design, self.kind) {
            (Design::Uniform, EstimatorKind::UniformMle) => "uni".to_string(),
            (Design::ScoreNorm, EstimatorKind::Ipw) => "ipw".to_string(),
            (Design::ScoreNorm, EstimatorKind::Mscl) => "mscl".to_string(),
            (d, k) => format!("{d:?}+{k:?}").to_lowercase(),
        };
        let moment = match self.moment {
            MomentChoice::None => "plain",
            MomentChoice::Xy => "mas-xy",
            MomentChoice::Opt => "mas-opt",
        };
        format!("{method}-{moment}")
    }

    /// The paper-style trio for a model: uniform, IPW, and (binary models
    /// only) MSCL, each plain / XY-corrected / optimally corrected.
    pub fn canonical_set(model: &Model) -> Vec<EstimatorSpec> {
        let mut methods = vec!["uni", "ipw"];
        if model.is_logistic() {
            methods.push("mscl");
        }
        let mut out = Vec::new();
        for m in methods {
            for moment in ["plain", "mas-xy", "mas-opt"] {
                out.push(EstimatorSpec::parse(&format!("{m}-{moment}")).unwrap());
            }
        }
        out
    }

    /// Whether the run needs a pilot estimate at all.
    pub fn needs_pilot(&self) -> bool {
        self.design == Design::ScoreNorm || self.moment == MomentChoice::Opt
    }
}

/// When the pipeline draws a pilot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PilotPolicy {
    /// Draw the pilot only when the estimator needs it (replication and
    /// timing semantics: the plain uniform estimator pays no pilot cost).
    WhenNeeded,
    /// Always draw the pilot and treat the complement as whole data.
    Always,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    /// Plain subsample estimate.
    pub theta_tilde: DVector<f64>,
    /// Corrected estimate, when a moment was folded in.
    pub theta_mas: Option<DVector<f64>>,
    /// The reported estimate: corrected when available, plain otherwise.
    pub estimate: DVector<f64>,
    /// Per-coordinate standard errors of the reported estimate.
    pub std_errors: DVector<f64>,
    /// Plug-in variance matrix of the reported estimate (unnormalized).
    pub v_hat: DMatrix<f64>,
    pub diagnostics: MasDiagnostics,
    pub condition_omega: Option<f64>,
    pub realized_pilot: usize,
}

/// Runs one estimator end-to-end: pilot (if needed), plan, main draw, plain
/// solve, and the one-step correction.
pub fn run_estimator<R: Records>(
    model: &Model,
    data: &R,
    spec: EstimatorSpec,
    n: f64,
    n0: f64,
    seed: u64,
) -> Result<PipelineOutput, HarnessError> {
    run_estimator_with(model, data, spec, n, n0, seed, PilotPolicy::WhenNeeded)
}

pub fn run_estimator_with<R: Records>(
    model: &Model,
    data: &R,
    spec: EstimatorSpec,
    n: f64,
    n0: f64,
    seed: u64,
    policy: PilotPolicy,
) -> Result<PipelineOutput, HarnessError> {
    spec.kind.validate_for(model)?;
    let draw_a_pilot = spec.needs_pilot() || policy == PilotPolicy::Always;

    if draw_a_pilot {
        let split = draw_pilot(data, n0, rng::mix3(seed, rng::stream::PILOT, 0))?;
        let pilot_fit = solve_plain(
            EstimatorKind::UniformMle,
            model,
            &split.pilot_plan,
            data,
            &split.pilot,
            &model.default_start(),
        )?;
        let whole = split.remainder;
        finish_run(model, &whole, spec, n, seed, Some(&pilot_fit.theta), split.pilot.len())
    } else {
        finish_run(model, data, spec, n, seed, None, 0)
    }
}

fn finish_run<R: Records>(
    model: &Model,
    whole: &R,
    spec: EstimatorSpec,
    n: f64,
    seed: u64,
    pilot: Option<&DVector<f64>>,
    realized_pilot: usize,
) -> Result<PipelineOutput, HarnessError> {
    let momfun: Option<Box<dyn MomentFunction>> = match spec.moment {
        MomentChoice::None => None,
        MomentChoice::Xy => Some(Box::new(XyMoment::new(model.p()))),
        MomentChoice::Opt => {
            let pilot = pilot.expect("optimal moment requires a pilot");
            Some(Box::new(build_optimal_moment(model, pilot)?))
        }
    };

    // Score-norm plans and whole-data moments both need one pass over the
    // data; run them fused so each estimator scans the whole data once.
    let (plan, mu_hat) = match spec.design {
        Design::ScoreNorm => {
            let pilot = pilot.expect("score-norm design requires a pilot");
            let (plan, mu) = scorenorm_plan_and_moment(model, whole, n, pilot, spec.moment)?;
            (plan, mu)
        }
        Design::Uniform => {
            let plan = make_plan(spec.design, model, whole, n, pilot)?;
            let mu = match &momfun {
                Some(h) => Some(whole_data_moment(h.as_ref(), whole)?),
                None => None,
            };
            (plan, mu)
        }
    };

    let sub = draw_poisson(&plan, whole, rng::mix3(seed, rng::stream::MAIN_DRAW, 0))?;
    let init = pilot.cloned().unwrap_or_else(|| model.default_start());
    let fit = solve_plain(spec.kind, model, &plan, whole, &sub, &init)?;

    let diagnostics = MasDiagnostics {
        newton_iterations: fit.iterations,
        realized_subsample: sub.len(),
        plan_fell_back_to_uniform: plan.fallback_uniform,
        jittered: false,
    };

    match momfun {
        None => {
            let v = plain_variance(spec.kind, model, &plan, whole, &sub, &fit.theta)?;
            let se = plain_std_errors(&v, plan.n_expected)?;
            Ok(PipelineOutput {
                estimate: fit.theta.clone(),
                theta_tilde: fit.theta,
                theta_mas: None,
                std_errors: se,
                v_hat: v,
                diagnostics,
                condition_omega: None,
                realized_pilot,
            })
        }
        Some(h) => {
            let mu_hat = mu_hat.expect("moment average computed above");
            let assembly =
                assemble_gmm(spec.kind, model, &plan, whole, &sub, h.as_ref(), &mu_hat, &fit.theta)?;
            let result = mas_result(&assembly, diagnostics)?;
            Ok(PipelineOutput {
                theta_tilde: fit.theta,
                estimate: result.theta_mas.clone(),
                theta_mas: Some(result.theta_mas),
                std_errors: result.std_errors,
                v_hat: result.v_hat,
                condition_omega: Some(result.condition_omega),
                diagnostics: result.diagnostics,
                realized_pilot,
            })
        }
    }
}

/// One whole-data pass computing the score-norm plan weights and, when a
/// moment is requested, its sample average. Produces exactly the same plan
/// as [`make_plan`] and the same average as [`whole_data_moment`]: the
/// optimal moment IS the pilot score, so the pass shares its evaluation with
/// the weight computation.
fn scorenorm_plan_and_moment<R: Records>(
    model: &Model,
    records: &R,
    n: f64,
    pilot: &DVector<f64>,
    moment: MomentChoice,
) -> Result<(Plan, Option<WholeDataMoment>), HarnessError> {
    model.validate_params(pilot)?;
    let q = match moment {
        MomentChoice::None => 0,
        MomentChoice::Xy => model.p(),
        MomentChoice::Opt => model.dim(),
    };
    let xy = XyMoment::new(model.p());
    let bound = records.index_bound();

    struct Acc {
        weights: Vec<f64>,
        weight_sum: f64,
        moment_sum: DVector<f64>,
        count: usize,
    }

    let acc = crate::chunked::fold_indexed(
        bound,
        || Acc { weights: Vec::new(), weight_sum: 0.0, moment_sum: DVector::zeros(q), count: 0 },
        |start, end, acc| {
            acc.weights.reserve(end - start);
            let mut hbuf = DVector::zeros(q);
            let mut err: Option<HarnessError> = None;
            let mut next = start;
            records.scan(start, end, |i, obs| {
                if err.is_some() {
                    return;
                }
                acc.weights.resize(acc.weights.len() + (i - next), f64::NAN);
                next = i + 1;
                let w: Result<f64, HarnessError> = match moment {
                    MomentChoice::Opt => model
                        .score_with_norm(pilot, obs, &mut hbuf)
                        .map(|w| {
                            acc.moment_sum += &hbuf;
                            w
                        })
                        .map_err(HarnessError::from),
                    MomentChoice::Xy => match xy.eval_into(obs, &mut hbuf) {
                        Ok(()) => {
                            acc.moment_sum += &hbuf;
                            model.score_norm(pilot, obs).map_err(HarnessError::from)
                        }
                        Err(e) => Err(e.into()),
                    },
                    MomentChoice::None => {
                        model.score_norm(pilot, obs).map_err(HarnessError::from)
                    }
                };
                match w {
                    Ok(w) => {
                        acc.weights.push(w);
                        acc.weight_sum += w;
                        acc.count += 1;
                    }
                    Err(e) => err = Some(e),
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            acc.weights.resize(acc.weights.len() + (end - next), f64::NAN);
            Ok::<(), HarnessError>(())
        },
        |a, b| {
            a.weights.extend_from_slice(&b.weights);
            a.weight_sum += b.weight_sum;
            a.moment_sum += b.moment_sum;
            a.count += b.count;
        },
    )?;

    let plan =
        Plan::from_score_weights(pilot.clone(), acc.weights, acc.weight_sum, n, acc.count, bound)?;
    let mu = (moment != MomentChoice::None).then(|| WholeDataMoment {
        mu_hat: acc.moment_sum / acc.count as f64,
        count: acc.count,
    });
    Ok((plan, mu))
}

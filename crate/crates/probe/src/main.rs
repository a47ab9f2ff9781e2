use massub::data::Records;
use massub::estimator::*;
use massub::harness::generate_dataset;
use massub::model::Model;
use massub::moments::*;
use massub::rng;
use massub::sampling::*;
use nalgebra::DVector;
use std::time::Instant;

fn med(label: &str, reps: usize, mut f: impl FnMut()) {
    let mut ts = Vec::new();
    for _ in 0..reps {
        let t0 = Instant::now();
        f();
        ts.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("{label:22} min {:6.1}  med {:6.1}  max {:6.1} ms", ts[0], ts[reps / 2], ts[reps - 1]);
}

fn main() {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let model = Model::logistic(9);
        let mut theta0 = DVector::from_element(10, 0.2);
        theta0[0] = 0.0;
        let data = generate_dataset(&model, &theta0, 1_000_000, 1).unwrap();
        let seed = 4242u64;
        let split = draw_pilot(&data, 200.0, rng::mix3(seed, rng::stream::PILOT, 0)).unwrap();
        let pilot = solve_plain(EstimatorKind::UniformMle, &model, &split.pilot_plan, &data, &split.pilot, &model.default_start()).unwrap().theta;
        let rem = split.remainder;

        med("pilot draw", 9, || { draw_pilot(&data, 200.0, rng::mix3(seed, rng::stream::PILOT, 0)).unwrap(); });
        med("weights pass (plan)", 9, || { make_plan(Design::ScoreNorm, &model, &rem, 10_000.0, Some(&pilot)).unwrap(); });
        let plan = make_plan(Design::ScoreNorm, &model, &rem, 10_000.0, Some(&pilot)).unwrap();
        let h = build_optimal_moment(&model, &pilot).unwrap();
        med("mu_opt pass", 9, || { whole_data_moment(&h, &rem).unwrap(); });
        let mu = whole_data_moment(&h, &rem).unwrap();
        med("draw", 9, || { draw_poisson(&plan, &rem, rng::mix3(seed, rng::stream::MAIN_DRAW, 0)).unwrap(); });
        let sub = draw_poisson(&plan, &rem, rng::mix3(seed, rng::stream::MAIN_DRAW, 0)).unwrap();
        med("solve ipw", 9, || { solve_plain(EstimatorKind::Ipw, &model, &plan, &rem, &sub, &pilot).unwrap(); });
        med("solve mscl", 9, || { solve_plain(EstimatorKind::Mscl, &model, &plan, &rem, &sub, &pilot).unwrap(); });
        let fit = solve_plain(EstimatorKind::Ipw, &model, &plan, &rem, &sub, &pilot).unwrap();
        med("assemble ipw+opt", 9, || { assemble_gmm(EstimatorKind::Ipw, &model, &plan, &rem, &sub, &h, &mu, &fit.theta).unwrap(); });
        med("plain_variance", 9, || { plain_variance(EstimatorKind::Ipw, &model, &plan, &rem, &sub, &fit.theta).unwrap(); });
        let full = Subsample::full(&data);
        let plan_f = Plan::uniform(full.expected_n, data.count(), data.index_bound()).unwrap();
        med("whole-data newton", 5, || { solve_plain(EstimatorKind::UniformMle, &model, &plan_f, &data, &full, &model.default_start()).unwrap(); });
    });
}

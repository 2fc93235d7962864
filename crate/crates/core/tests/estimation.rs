use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teleop_kf::dataio::{normalize, TrajectoryDataset};
use teleop_kf::estimator::{
    estimate_noise_empirical, kf_predict, kf_update, run_filter, BootstrapOptions, FilterOptions,
    FilterState, NoiseModel, NoiseProvenance, ResidualInput, UpdateMode,
};
use teleop_kf::metrics::{accuracy_pct, fit_report, innovation_whiteness, rmse, AccuracyMetric};
use teleop_kf::netsim::{impair, NetworkScenario};
use teleop_kf::synthetic::{gaussian_matrix, random_stable_system, simulate_stochastic, PoleSpec};
use teleop_kf::sysid::{identify, simulate, OrderCriterion, StateSpaceModel};

fn system(seed: u64, n: usize, m: usize, p: usize) -> StateSpaceModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_stable_system(
        &mut rng,
        n,
        m,
        p,
        PoleSpec {
            feedthrough: false,
            ..Default::default()
        },
    )
    .unwrap()
    .0
}

fn max_rmse(a: &DMatrix<f64>, b: &DMatrix<f64>, skip: usize) -> f64 {
    (0..a.ncols())
        .map(|c| {
            let x: Vec<f64> = a.column(c).iter().skip(skip).copied().collect();
            let y: Vec<f64> = b.column(c).iter().skip(skip).copied().collect();
            rmse(&x, &y).unwrap()
        })
        .fold(0.0, f64::max)
}

#[test]
fn perfect_channel_exact_model_converges() {
    let model = system(1, 3, 1, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u = gaussian_matrix(&mut rng, 500, 1);
    let mut x0 = DVector::zeros(3);
    x0[0] = 1.0;
    let clean = simulate(&model, &u, &x0).unwrap();
    let stream = impair(&clean, &NetworkScenario::ideal(), 0.01).unwrap();
    let noise = NoiseModel::new(DMatrix::zeros(3, 3), DMatrix::identity(2, 2) * 1e-12, NoiseProvenance::Initial).unwrap();
    let run = run_filter(&model, &noise, &u, &stream.observed, &FilterState::default_for(3), FilterOptions::default()).unwrap();
    assert_eq!(run.len(), 500);
    assert!(max_rmse(&run.estimates, &clean, 30) < 1e-6);
}

#[test]
fn total_loss_reduces_to_open_loop_prediction() {
    let model = system(3, 2, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u = gaussian_matrix(&mut rng, 400, 2);
    let clean = simulate(&model, &u, &DVector::zeros(2)).unwrap();
    let stream = impair(&clean, &NetworkScenario::new(0.0, 0.0, 1.0, 9).unwrap(), 0.01).unwrap();
    assert!(stream.loss_mask[1..].iter().all(|&l| l));
    // the held sample carries no information, so a filter that discounts it is the model
    let noise = NoiseModel::new(DMatrix::identity(2, 2) * 1e-4, DMatrix::identity(2, 2) * 1e12, NoiseProvenance::Initial).unwrap();
    let run = run_filter(&model, &noise, &u, &stream.observed, &FilterState::default_for(2), FilterOptions::default()).unwrap();
    let open_loop = simulate(&model, &u, &DVector::zeros(2)).unwrap();
    assert!((&run.estimates - &open_loop).amax() < 1e-6);
}

#[test]
fn batch_and_sequential_runs_agree() {
    let model = system(5, 3, 1, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let u = gaussian_matrix(&mut rng, 300, 1);
    let sim = simulate_stochastic(&mut rng, &model, &u, &(DMatrix::identity(3, 3) * 0.01), &(DMatrix::identity(3, 3) * 0.1), &DVector::zeros(3)).unwrap();
    let noise = NoiseModel::new(DMatrix::identity(3, 3) * 0.01, DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.2, 0.3])), NoiseProvenance::Initial).unwrap();
    let seq = run_filter(&model, &noise, &u, &sim.outputs, &FilterState::default_for(3), FilterOptions { mode: UpdateMode::Sequential }).unwrap();
    let bat = run_filter(&model, &noise, &u, &sim.outputs, &FilterState::default_for(3), FilterOptions { mode: UpdateMode::Batch }).unwrap();
    assert!((&seq.estimates - &bat.estimates).amax() < 1e-9);
}

#[test]
fn bootstrap_on_noise_free_data_is_zero() {
    let model = system(7, 2, 1, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u = gaussian_matrix(&mut rng, 1000, 1);
    let y = simulate(&model, &u, &DVector::zeros(2)).unwrap();
    // the state equation drives x(k) with u(k-1); that is the residual that vanishes here
    let options = BootstrapOptions {
        eps_q: 1e-12,
        eps_r: 1e-12,
        residual_input: ResidualInput::Previous,
        ..Default::default()
    };
    let est = estimate_noise_empirical(&model, &u, &y, &options).unwrap();
    assert!(est.q.amax() < 1e-10 && est.r.amax() < 1e-10, "{} {}", est.q.amax(), est.r.amax());
}

struct Reference {
    model: StateSpaceModel,
    u: DMatrix<f64>,
    y: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn reference_system(seed: u64) -> Reference {
    let model = system(seed, 2, 1, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let u = gaussian_matrix(&mut rng, 10_000, 1);
    let q = DMatrix::identity(2, 2) * 0.01;
    let r = DMatrix::identity(2, 2) * 0.04;
    let y = simulate_stochastic(&mut rng, &model, &u, &q, &r, &DVector::zeros(2)).unwrap().outputs;
    Reference { model, u, y, q, r }
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
#[ignore = "unattainable: the posterior residual sees R S^-1 R, not R, and the process residual sees K S K', not Q"]
fn bootstrap_recovers_known_covariances() {
    let s = reference_system(11);
    let est = estimate_noise_empirical(&s.model, &s.u, &s.y, &BootstrapOptions::default()).unwrap();
    assert!(rel(&est.r, &s.r) < 0.2, "R err {}", rel(&est.r, &s.r));
    assert!(rel(&est.q, &s.q) < 0.5, "Q err {}", rel(&est.q, &s.q));
}

#[test]
fn posterior_residuals_understate_sensor_noise() {
    let s = reference_system(11);
    let est = estimate_noise_empirical(&s.model, &s.u, &s.y, &BootstrapOptions::default()).unwrap();
    assert!(est.r.trace() < s.r.trace());
    assert!(est.q.clone().symmetric_eigen().eigenvalues.min() >= 0.0);
}

#[test]
#[ignore = "does not hold in general: each pass shrinks R_emp further and the innovations drift away from white"]
fn second_iteration_is_no_less_white() {
    let s = reference_system(13);
    let whiteness = |iterations| {
        let opts = BootstrapOptions {
            iterations,
            ..Default::default()
        };
        let noise = estimate_noise_empirical(&s.model, &s.u, &s.y, &opts).unwrap();
        let run = run_filter(&s.model, &noise, &s.u, &s.y, &FilterState::default_for(2), FilterOptions::default()).unwrap();
        let w = innovation_whiteness(&run.innovations, 10).unwrap();
        w.statistic.iter().cloned().fold(0.0, f64::max)
    };
    let (one, two) = (whiteness(1), whiteness(2));
    assert!(two <= one, "iteration 2: {two}, iteration 1: {one}");
}

#[test]
fn matched_filter_innovations_are_white() {
    let model = system(21, 3, 1, 1);
    let q = DMatrix::identity(3, 3) * 0.01;
    let r = DMatrix::identity(1, 1) * 0.04;
    let noise = NoiseModel::new(q.clone(), r.clone(), NoiseProvenance::Initial).unwrap();
    let mut passed = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = gaussian_matrix(&mut rng, 10_000, 1);
        let y = simulate_stochastic(&mut rng, &model, &u, &q, &r, &DVector::zeros(3)).unwrap().outputs;
        let run = run_filter(&model, &noise, &u, &y, &FilterState::default_for(3), FilterOptions::default()).unwrap();
        passed += innovation_whiteness(&run.innovations, 10).unwrap().within(3.0) as usize;
    }
    assert!(passed >= 95, "{passed}/100");
}

#[test]
fn iid_noise_passes_three_sigma_band() {
    let mut passed = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let e = gaussian_matrix(&mut rng, 10_000, 1);
        passed += innovation_whiteness(&e, 10).unwrap().within(3.0) as usize;
    }
    assert!(passed >= 95, "{passed}/100");
}

#[test]
fn bounded_measurements_keep_estimates_bounded() {
    let model = system(31, 3, 1, 2);
    let noise = NoiseModel::initial(3, 2, 1e-4, 1e-4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut state = FilterState::default_for(3);
    let mut peak = 0.0_f64;
    for _ in 0..1_000_000 {
        let u = DVector::from_element(1, rng.random_range(-1.0..1.0));
        let z = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        state = kf_predict(&state, &u, &model, &noise).unwrap();
        state = kf_update(&state, &z, &model, &noise, UpdateMode::Sequential).unwrap();
        peak = peak.max(state.x_hat.amax());
    }
    assert!(peak.is_finite() && peak < 1e3, "{peak}");
    assert!(state.p.amax() < 1e3);
}

fn raw_dataset(model: &StateSpaceModel, samples: usize, noise: f64, seed: u64) -> TrajectoryDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = gaussian_matrix(&mut rng, samples, model.n_inputs());
    let y = simulate(model, &u, &DVector::zeros(model.order())).unwrap();
    let y = &y + gaussian_matrix(&mut rng, samples, model.n_outputs()) * noise;
    TrajectoryDataset::from_matrices(u, y, 0.01).unwrap()
}

fn normalized_dataset(model: &StateSpaceModel, samples: usize, noise: f64, seed: u64) -> TrajectoryDataset {
    normalize(&raw_dataset(model, samples, noise, seed)).0
}

#[test]
fn self_validation_is_nearly_perfect() {
    let truth = system(41, 2, 1, 2);
    let ds = raw_dataset(&truth, 1500, 0.0, 42);
    let id = identify(&ds.inputs, &ds.outputs, 10, OrderCriterion::Fixed(2), ds.dt).unwrap();
    let fit = fit_report(&id.model, &ds, AccuracyMetric::NrmseRange).unwrap();
    assert!(fit.accuracy_pct.iter().all(|&a| a > 99.9), "{:?}", fit.accuracy_pct);
    assert_eq!(fit.predictions.nrows(), 1500);
}

#[test]
fn zeroed_model_scores_like_zero_predictor() {
    let truth = system(43, 2, 1, 2);
    let ds = normalized_dataset(&truth, 300, 0.05, 44);
    let mut model = truth.clone();
    model.b.fill(0.0);
    model.c.fill(0.0);
    let fit = fit_report(&model, &ds, AccuracyMetric::NrmseRange).unwrap();
    for c in 0..2 {
        let t: Vec<f64> = ds.outputs.column(c).iter().copied().collect();
        let zero = accuracy_pct(&vec![0.0; t.len()], &t, AccuracyMetric::NrmseRange).unwrap();
        assert_eq!(fit.accuracy_pct[c], zero);
    }
}

#[test]
fn held_out_accuracy_tracks_identification_accuracy() {
    let truth = system(45, 3, 1, 2);
    let ds = normalized_dataset(&truth, 4000, 0.05, 46);
    let (train, test) = ds.split(0.5).unwrap();
    let id = identify(&train.inputs, &train.outputs, 12, OrderCriterion::Fixed(3), ds.dt).unwrap();
    let a = fit_report(&id.model, &train, AccuracyMetric::NrmseRange).unwrap();
    let b = fit_report(&id.model, &test, AccuracyMetric::NrmseRange).unwrap();
    for c in 0..2 {
        assert!((a.accuracy_pct[c] - b.accuracy_pct[c]).abs() < 2.0, "{:?} {:?}", a.accuracy_pct, b.accuracy_pct);
    }
}

#[test]
fn noise_free_identification_has_exact_rank() {
    for seed in 0..10 {
        let n = 1 + (seed as usize) % 4;
        let truth = system(100 + seed, n, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let u = gaussian_matrix(&mut rng, 50 * n.max(4), 2);
        let y = simulate(&truth, &u, &DVector::zeros(n)).unwrap();
        let id = identify(&u, &y, 2 * n + 2, OrderCriterion::Fixed(n), 1.0).unwrap();
        let ss = &id.decomposition.singular_values;
        assert_eq!(ss.iter().filter(|&&s| s > 1e-8 * ss[0]).count(), n, "seed {seed}: {ss:?}");
        for k in 0..10 {
            let t = truth.markov(k);
            assert!((id.model.markov(k) - &t).amax() < 1e-6 * t.amax().max(1.0));
        }
    }
}

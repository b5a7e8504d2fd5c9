use mogp_gapfill::gp;
use mogp_gapfill::metrics::rmse;
use mogp_gapfill::mogp::{self, DiagnoseConfig};
use mogp_gapfill::phenosynth::{generate_scenario, sample_matern32, DoubleLogistic, Gap, Generator, ScenarioConfig};
use mogp_gapfill::TimeSeries;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use mogp_gapfill::TrainConfig;

fn scenario(seed: u64) -> mogp_gapfill::phenosynth::Scenario {
    generate_scenario(&ScenarioConfig {
        span_days: 730.0,
        gaps: vec![Gap { start: 300.0, length: 90.0 }],
        seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let sc = scenario(1);
    let cfg = TrainConfig { restarts: 3, seed: 9, ..Default::default() };
    let a = mogp::train(&sc.observed_1, &sc.observed_2, &cfg).unwrap();
    let b = mogp::train(&sc.observed_1, &sc.observed_2, &cfg).unwrap();
    assert_eq!(a.params(), b.params());
    assert_eq!(a.fit_info(), b.fit_info());
}

#[test]
fn trained_model_beats_its_initialization_and_couples_outputs() {
    let sc = scenario(2);
    let model = mogp::train(&sc.observed_1, &sc.observed_2, &TrainConfig::default()).unwrap();
    let fit = model.fit_info().unwrap();
    assert!(fit.converged);
    assert!((fit.log_likelihood - model.log_marginal_likelihood()).abs() < 1e-6);
    let d = model.diagnose(&DiagnoseConfig::default());
    assert!(d.ell_lf >= d.ell_hf);
    // the generator shares its long-scale latent positively between outputs
    assert!(d.output_correlation > 0.5, "{d:?}");
    assert!(model.params().noise.0.iter().all(|&s| s >= TrainConfig::default().noise_floor));
}

#[test]
fn single_output_fit_tracks_smooth_signal() {
    let sc = generate_scenario(&ScenarioConfig {
        span_days: 730.0,
        interval: [5.0, 6.0],
        noise_std: [0.05, 0.05],
        generator: Generator::DoubleLogisticSeasons(DoubleLogistic::default()),
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let model = gp::train(&sc.observed_1, &TrainConfig::default()).unwrap();
    let band = model.predict(sc.truth_1.times());
    let err = rmse(&band.mean, sc.truth_1.values()).unwrap();
    assert!(err < 0.1, "rmse {err}");
    assert!(band.std.iter().all(|&s| s > 0.0 && s.is_finite()));
}

#[test]
fn joint_model_fills_mid_season_gap_from_radar() {
    // the gap covers the first green-up; only the radar series sees it
    for seed in [4, 5] {
        let sc = generate_scenario(&ScenarioConfig {
            span_days: 730.0,
            interval: [10.0, 6.0],
            gaps: vec![Gap { start: 55.0, length: 90.0 }],
            generator: Generator::DoubleLogisticSeasons(DoubleLogistic::default()),
            seed,
            ..Default::default()
        })
        .unwrap();
        let cfg = TrainConfig { restarts: 3, seed, ..Default::default() };
        let t = sc.withheld_1.times();
        let truth: Vec<f64> = t.iter().map(|&x| sc.truth_1.values()[x as usize]).collect();
        let m = mogp::train(&sc.observed_1, &sc.observed_2, &cfg).unwrap().predict(t);
        let g = gp::train(&sc.observed_1, &cfg).unwrap().predict(t);
        let (joint, single) = (rmse(&m[0].mean, &truth).unwrap(), rmse(&g.mean, &truth).unwrap());
        assert!(joint < 0.5 * single, "seed {seed}: {joint} vs {single}");
    }
}

#[test]
fn single_output_recovers_lengthscale() {
    // unit-variance Matern draw, noise variance 0.01, 80 samples over 1000 days
    let t: Vec<f64> = (0..80).map(|i| i as f64 * 12.5).collect();
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut ells = Vec::new();
    for seed in 0..6 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = sample_matern32(50.0, &t, &mut rng);
        let y: Vec<f64> = f.iter().map(|v| v + noise.sample(&mut rng)).collect();
        let s = TimeSeries::new(t.clone(), y, "x").unwrap();
        let model = gp::train(&s, &TrainConfig { seed, ..Default::default() }).unwrap();
        ells.push(model.hyper().kernel.lengthscale());
    }
    assert!(ells.iter().all(|l| (35.0..=70.0).contains(l)), "{ells:?}");
}

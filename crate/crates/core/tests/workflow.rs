use stgp_core::baseline::{assemble_baseline, BaselineConfig};
use stgp_core::detection::DetectionConfig;
use stgp_core::dynamics::{assemble_model, ModelKind};
use stgp_core::io::{read_cube, write_cube};
use stgp_core::pipeline::{compare_models, scenario_model_params};
use stgp_core::simulator::{simulate_spde, simulate_statespace, ScenarioSpec};
use stgp_core::statespace::{kalman_filter, rts_smoother, FilterOptions, ObsNoiseSpec, PriorSpec};
use stgp_core::{build_wavenumber_sets, make_grid, PhysicalParams, SpaceTimeCube};

fn params(eta: f64) -> PhysicalParams {
    PhysicalParams::isotropic([0.0, 0.0], 0.002, eta, 0.01, 1.0).unwrap()
}

fn loglik(data: &SpaceTimeCube, p: &PhysicalParams, obs: f64) -> f64 {
    let sets = build_wavenumber_sets(data.grid.n1, data.grid.n2).unwrap();
    let model = assemble_model(&data.grid, &sets, p, data.dt, None).unwrap();
    kalman_filter(&model, data, &ObsNoiseSpec::new(obs).unwrap(), &FilterOptions::default()).unwrap().loglik
}

#[test]
fn generating_eta_beats_half_and_one_and_a_half() {
    let grid = make_grid(8, 8, 1.0).unwrap();
    let sets = build_wavenumber_sets(8, 8).unwrap();
    let truth = params(0.5);
    let model = assemble_model(&grid, &sets, &truth, 0.1, None).unwrap();
    for seed in 0..10 {
        let data = simulate_statespace(&model, 80, seed, 0.01, PriorSpec::Stationary).unwrap().cube;
        let at_truth = loglik(&data, &truth, 0.01);
        for eta in [0.25, 0.75] {
            assert!(at_truth >= loglik(&data, &params(eta), 0.01), "seed {seed}, eta {eta}");
        }
    }
}

#[test]
fn innovations_are_serially_uncorrelated() {
    let grid = make_grid(8, 8, 1.0).unwrap();
    let sets = build_wavenumber_sets(8, 8).unwrap();
    let p = params(0.5);
    let model = assemble_model(&grid, &sets, &p, 0.1, None).unwrap();
    let data = simulate_statespace(&model, 600, 11, 0.05, PriorSpec::Stationary).unwrap().cube;
    let run = kalman_filter(&model, &data, &ObsNoiseSpec::new(0.05).unwrap(), &FilterOptions::default()).unwrap();
    let inn = &run.innovations[50..];
    let (mut num, mut den) = (0.0, 0.0);
    for w in inn.windows(2) {
        num += w[0].dot(&w[1]);
        den += w[0].dot(&w[0]);
    }
    let rho = num / den;
    assert!(rho.abs() < 0.05, "lag-one correlation {rho}");
}

#[test]
fn baseline_runs_through_the_same_filter_and_smoother() {
    let grid = make_grid(8, 8, 1.0).unwrap();
    let sets = build_wavenumber_sets(8, 8).unwrap();
    let p = PhysicalParams::isotropic([1.0, 0.0], 0.02, 0.1, 0.01, 1.0).unwrap();
    let model = assemble_baseline(&grid, &sets, &p, 0.1, &BaselineConfig::default()).unwrap();
    assert_eq!(model.state_dim, 128);
    let data = simulate_statespace(&model, 30, 2, 0.01, PriorSpec::Isotropic(1.0)).unwrap().cube;
    let opts = FilterOptions { prior: PriorSpec::Isotropic(1.0), ..Default::default() };
    let run = kalman_filter(&model, &data, &ObsNoiseSpec::new(0.01).unwrap(), &opts).unwrap();
    assert!(run.loglik.is_finite());
    let smooth = rts_smoother(&model, &run).unwrap();
    for k in 0..30 {
        assert!(smooth.trace(k) <= run.filtered.trace(k) * (1.0 + 1e-9));
    }
}

#[test]
fn stored_cube_filters_identically() {
    let spec = ScenarioSpec { n1: 8, n2: 8, seed: 4, ..ScenarioSpec::default() };
    let sim = simulate_spde(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cube.stgp");
    write_cube(&path, &sim.cube).unwrap();
    let back = read_cube(&path).unwrap();
    assert_eq!(back, sim.cube);
    let mp = scenario_model_params(&spec, ModelKind::Proposed).unwrap();
    assert_eq!(loglik(&back, &mp.params, mp.obs_variance), loglik(&sim.cube, &mp.params, mp.obs_variance));
}

#[test]
fn seeds_control_the_simulation() {
    let spec = ScenarioSpec { n1: 8, n2: 8, seed: 1, ..ScenarioSpec::default() };
    let a = simulate_spde(&spec).unwrap().cube;
    let b = simulate_spde(&spec).unwrap().cube;
    let c = simulate_spde(&ScenarioSpec { seed: 2, ..spec }).unwrap().cube;
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn comparison_reports_both_models() {
    let spec = ScenarioSpec { n1: 8, n2: 8, ..ScenarioSpec::default() };
    let sim = simulate_spde(&spec).unwrap();
    let prop = scenario_model_params(&spec, ModelKind::Proposed).unwrap();
    let base = scenario_model_params(&spec, ModelKind::Baseline).unwrap();
    let rows = compare_models(&prop, &base, &sim.cube, &DetectionConfig::default()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].model, "proposed");
    assert_eq!(rows[1].model, "baseline");
    for r in &rows {
        assert!(r.loglik.is_finite() && r.field_mse >= 0.0 && r.derivative_mse >= 0.0);
        if let Some(f) = r.combined_alarm {
            assert!(f > DetectionConfig::default().baseline_window && f < sim.cube.n_frames());
        }
    }
}

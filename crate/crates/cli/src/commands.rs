use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use stgp_core::covariance::power_spectrum_cy;
use stgp_core::detection::{detect as run_detect, DetectionConfig, ModalTrace};
use stgp_core::dynamics::ModelKind;
use stgp_core::estimation::{fit as run_fit, FitProblem, OptimizerConfig, ParamLayout};
use stgp_core::io::{fmt_f64, load_toml, read_cube_any, save_toml, write_csv, write_cube, write_cube_csv};
use stgp_core::pipeline::{build_model, compare_models, scenario_model_params, ModelParams};
use stgp_core::simulator::{simulate_spde, ScenarioSpec};
use stgp_core::statespace::{
    kalman_filter, modal_amplitude, reconstruct_fields, rts_smoother, Coefficient, Estimates, FilterOptions,
    ObsNoiseSpec,
};
use stgp_core::{Result, StgpError, Wavenumber};

use crate::CubeFormat;

pub fn simulate(
    scenario: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    format: CubeFormat,
    params_out: Option<&Path>,
) -> Result<()> {
    let mut spec: ScenarioSpec = match scenario {
        Some(p) => load_toml(p)?,
        None => ScenarioSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let sim = simulate_spde(&spec)?;
    match format {
        CubeFormat::Bin => write_cube(out, &sim.cube)?,
        CubeFormat::Csv => write_cube_csv(out, &sim.cube)?,
    }
    if let Some(dir) = params_out {
        fs::create_dir_all(dir)?;
        save_toml(dir.join("proposed.toml"), &scenario_model_params(&spec, ModelKind::Proposed)?)?;
        save_toml(dir.join("baseline.toml"), &scenario_model_params(&spec, ModelKind::Baseline)?)?;
    }
    println!(
        "simulated {} frames on a {}x{} grid (change at frame {}) -> {}",
        sim.cube.n_frames(),
        spec.n1,
        spec.n2,
        sim.change_frame,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
struct FitInit {
    #[serde(flatten)]
    model: ModelParams,
    #[serde(default)]
    layout: ParamLayout,
    #[serde(default)]
    remove_mean: bool,
    /// Coordinate names to hold fixed; `mu` freezes both advection entries.
    #[serde(default)]
    freeze: Vec<String>,
    #[serde(default)]
    optimizer: OptimizerConfig,
}

fn frozen_indices(names: &[String], layout: ParamLayout) -> Result<Vec<usize>> {
    let all = layout.names();
    let mut out = Vec::new();
    for n in names {
        let hits: Vec<usize> = if n == "mu" {
            vec![0, 1]
        } else {
            all.iter().position(|a| a == n || a.strip_prefix("ln_") == Some(n.as_str())).into_iter().collect()
        };
        if hits.is_empty() {
            return Err(StgpError::Config(format!("unknown coordinate {n:?}; expected one of {all:?} or \"mu\"")));
        }
        out.extend(hits);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

pub fn fit(data: &Path, init: &Path, out: &Path) -> Result<()> {
    let cube = read_cube_any(data)?;
    let init: FitInit = load_toml(init)?;
    let mut problem = FitProblem::new(&cube, init.layout, init.remove_mean)?;
    problem.frozen = frozen_indices(&init.freeze, init.layout)?;
    let r = run_fit(&problem, &init.model.params, init.model.obs_variance, &init.optimizer)?;
    let fitted = ModelParams { params: r.params.clone(), obs_variance: r.obs_variance, baseline: init.model.baseline };
    save_toml(out, &fitted)?;
    let trace_path = out.with_extension("trace.csv");
    write_csv(
        &trace_path,
        &["iteration", "objective"],
        r.objective_trace.iter().enumerate().map(|(i, v)| [i.to_string(), fmt_f64(*v)]),
    )?;
    println!(
        "fit: {} iterations, converged {}, best -loglik {}, eta {}, noise_scale {}, obs_variance {}",
        r.iterations,
        r.converged,
        fmt_f64(r.best_objective),
        fmt_f64(r.params.eta),
        fmt_f64(r.params.noise_scale),
        fmt_f64(r.obs_variance)
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct FilterSummary {
    model: String,
    path: String,
    loglik: f64,
    n_frames: usize,
    state_dim: usize,
}

fn write_traces(path: &Path, est: &Estimates, ks: &[Wavenumber]) -> Result<()> {
    let mut rows = Vec::new();
    for &k in ks {
        let a = modal_amplitude(est, k, Coefficient::Alpha)?;
        let b = modal_amplitude(est, k, Coefficient::Beta)?;
        for (t, (x, y)) in a.iter().zip(&b).enumerate() {
            rows.push([t.to_string(), k.0.to_string(), k.1.to_string(), fmt_f64(*x), fmt_f64(*y)]);
        }
    }
    write_csv(path, &["frame", "k1", "k2", "alpha", "beta"], rows)
}

pub fn filter(data: &Path, params: &Path, kind: ModelKind, out: &Path, lowpass: Option<i64>, smooth: bool) -> Result<()> {
    let cube = read_cube_any(data)?;
    let mp: ModelParams = load_toml(params)?;
    let model = build_model(kind, &mp, &cube, lowpass)?;
    let run = kalman_filter(&model, &cube, &ObsNoiseSpec::new(mp.obs_variance)?, &FilterOptions::default())?;
    fs::create_dir_all(out)?;

    let mut field_rows = Vec::new();
    let mut coeff_rows = Vec::new();
    let ks: Vec<Wavenumber> = model.wavenumbers().collect();
    for (t, m) in run.filtered.means().iter().enumerate() {
        let f = reconstruct_fields(&model, m.as_slice())?;
        for (i, (v, d)) in f.value_field.iter().zip(&f.derivative_field).enumerate() {
            let (r, c) = cube.grid.unflatten(i);
            field_rows.push([t.to_string(), r.to_string(), c.to_string(), fmt_f64(*v), fmt_f64(*d)]);
        }
        for &k in &ks {
            let s = model.slots(k)?;
            let get = |i: Option<usize>| i.map_or(0.0, |i| m[i]);
            coeff_rows.push([
                t.to_string(),
                k.0.to_string(),
                k.1.to_string(),
                fmt_f64(m[s.alpha_r]),
                fmt_f64(get(s.alpha_i)),
                fmt_f64(m[s.beta_r]),
                fmt_f64(get(s.beta_i)),
            ]);
        }
    }
    write_csv(out.join("fields.csv"), &["frame", "row", "col", "value", "derivative"], field_rows)?;
    write_csv(
        out.join("coefficients.csv"),
        &["frame", "k1", "k2", "alpha_r", "alpha_i", "beta_r", "beta_i"],
        coeff_rows,
    )?;
    write_traces(&out.join("traces.csv"), &run.filtered, &ks)?;
    if smooth {
        let s = rts_smoother(&model, &run)?;
        write_traces(&out.join("smoothed_traces.csv"), &s, &ks)?;
    }
    let summary = FilterSummary {
        model: format!("{kind:?}").to_lowercase(),
        path: run.mode.to_string(),
        loglik: run.loglik,
        n_frames: cube.n_frames(),
        state_dim: model.state_dim,
    };
    save_toml(out.join("summary.toml"), &summary)?;
    println!("filtered {} frames ({} path), loglik {}", cube.n_frames(), run.mode, fmt_f64(run.loglik));
    Ok(())
}

pub fn spectrum(params: &Path, out: &Path, kmax: i64, vs: &[f64]) -> Result<()> {
    if kmax < 0 {
        return Err(StgpError::Param("kmax must be >= 0".into()));
    }
    let mp: ModelParams = load_toml(params)?;
    mp.params.validate()?;
    let mut rows = Vec::new();
    for &v in vs {
        for k1 in -kmax..=kmax {
            for k2 in -kmax..=kmax {
                let u = [2.0 * std::f64::consts::PI * k1 as f64, 2.0 * std::f64::consts::PI * k2 as f64];
                rows.push([
                    k1.to_string(),
                    k2.to_string(),
                    fmt_f64(u[0]),
                    fmt_f64(u[1]),
                    fmt_f64(v),
                    fmt_f64(power_spectrum_cy(&u, v, &mp.params)),
                ]);
            }
        }
    }
    write_csv(out, &["k1", "k2", "u1", "u2", "v", "power"], rows)?;
    println!("wrote {} spectrum values to {}", vs.len() * ((2 * kmax + 1) as usize).pow(2), out.display());
    Ok(())
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    frame: usize,
    k1: i64,
    k2: i64,
    beta: f64,
}

fn read_traces(path: &Path) -> Result<Vec<ModalTrace>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| StgpError::Format(format!("{}: {e}", path.display())))?;
    let mut order = Vec::new();
    let mut series: BTreeMap<Wavenumber, Vec<(usize, f64)>> = BTreeMap::new();
    for row in reader.deserialize::<TraceRow>() {
        let row = row.map_err(|e| StgpError::Format(format!("{}: {e}", path.display())))?;
        let k = Wavenumber(row.k1, row.k2);
        let entry = series.entry(k).or_insert_with(|| {
            order.push(k);
            Vec::new()
        });
        entry.push((row.frame, row.beta));
    }
    order
        .into_iter()
        .map(|k| {
            let mut pts = series.remove(&k).unwrap_or_default();
            pts.sort_by_key(|p| p.0);
            if pts.iter().enumerate().any(|(i, p)| p.0 != i) {
                return Err(StgpError::Format(format!("frames of wavenumber {k} are not 0..n without gaps")));
            }
            Ok(ModalTrace { wavenumber: k, values: pts.into_iter().map(|p| p.1).collect() })
        })
        .collect()
}

fn load_detection(config: Option<&Path>) -> Result<DetectionConfig> {
    let cfg = match config {
        Some(p) => load_toml(p)?,
        None => DetectionConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn detect(traces: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_detection(config)?;
    let all = read_traces(traces)?;
    let watched: Vec<ModalTrace> = match &cfg.watch_set {
        Some(ws) => ws
            .iter()
            .map(|k| {
                all.iter().find(|t| t.wavenumber == *k).cloned().ok_or(StgpError::UnknownWavenumber(k.0, k.1))
            })
            .collect::<Result<_>>()?,
        None => all.into_iter().filter(|t| t.wavenumber.max_abs() <= 3).collect(),
    };
    let report = run_detect(&watched, &cfg)?;
    save_toml(out, &report)?;
    match report.combined_alarm {
        Some(f) => println!("combined alarm at frame {f} over {} traces", report.traces.len()),
        None => println!("no alarm over {} traces", report.traces.len()),
    }
    Ok(())
}

pub fn compare(
    data: &Path,
    params: &Path,
    baseline_params: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let cube = read_cube_any(data)?;
    let proposed: ModelParams = load_toml(params)?;
    let baseline: ModelParams = match baseline_params {
        Some(p) => load_toml(p)?,
        None => proposed.clone(),
    };
    let cfg = load_detection(config)?;
    let rows = compare_models(&proposed, &baseline, &cube, &cfg)?;
    write_csv(
        out,
        &["model", "loglik", "field_mse", "derivative_mse", "combined_alarm"],
        rows.iter().map(|r| {
            [
                r.model.clone(),
                fmt_f64(r.loglik),
                fmt_f64(r.field_mse),
                fmt_f64(r.derivative_mse),
                r.combined_alarm.map_or(String::new(), |f| f.to_string()),
            ]
        }),
    )?;
    for r in &rows {
        println!(
            "{:<9} loglik {:>14.4} field_mse {:.4e} derivative_mse {:.4e} alarm {}",
            r.model,
            r.loglik,
            r.field_mse,
            r.derivative_mse,
            r.combined_alarm.map_or("none".to_string(), |f| f.to_string())
        );
    }
    Ok(())
}

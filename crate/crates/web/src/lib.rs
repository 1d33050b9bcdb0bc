//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations are exposed: a power-spectrum heatmap, simulated
//! field frames, and β-trace change detection on those frames.

use std::f64::consts::PI;

use stgp_core::covariance::power_spectrum_cy;
use stgp_core::detection::DetectionConfig;
use stgp_core::dynamics::ModelKind;
use stgp_core::pipeline::{filter_and_detect, scenario_model_params};
use stgp_core::simulator::{simulate_spde, ScenarioSpec};
use stgp_core::{PhysicalParams, SpaceTimeCube};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// `log10` of the power spectrum on integer wavenumbers `-kmax..=kmax`
/// (row-major, `k1` slowest) at temporal frequency `v`.
pub fn log_spectrum(mu: [f64; 2], sigma: f64, eta: f64, phi: f64, v: f64, kmax: u32) -> stgp_core::Result<Vec<f64>> {
    let p = PhysicalParams::isotropic(mu, sigma, eta, phi, 1.0)?;
    let k = kmax as i64;
    let mut out = Vec::with_capacity(((2 * k + 1) * (2 * k + 1)) as usize);
    for k1 in -k..=k {
        for k2 in -k..=k {
            let u = [2.0 * PI * k1 as f64, 2.0 * PI * k2 as f64];
            out.push(power_spectrum_cy(&u, v, &p).log10());
        }
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn spectrum_heatmap(mu1: f64, mu2: f64, sigma: f64, eta: f64, phi: f64, v: f64, kmax: u32) -> Result<Vec<f64>, JsError> {
    log_spectrum([mu1, mu2], sigma, eta, phi, v, kmax).map_err(js_err)
}

/// A simulated scenario held on the Rust side.
#[wasm_bindgen]
pub struct Simulation {
    spec: ScenarioSpec,
    cube: SpaceTimeCube,
    change_frame: usize,
}

impl Simulation {
    pub fn run(n: usize, seed: u64, advection: f64) -> stgp_core::Result<Self> {
        let mut spec = ScenarioSpec { n1: n, n2: n, seed, ..ScenarioSpec::default() };
        spec.params.mu = vec![advection, 0.0];
        let sim = simulate_spde(&spec)?;
        Ok(Self { spec, cube: sim.cube, change_frame: sim.change_frame })
    }

    pub fn cube(&self) -> &SpaceTimeCube {
        &self.cube
    }

    pub fn detection(&self, kind: ModelKind) -> stgp_core::Result<Detection> {
        let mp = scenario_model_params(&self.spec, kind)?;
        let run = filter_and_detect(kind, &mp, &self.cube, &DetectionConfig::default())?;
        let n_frames = self.cube.n_frames();
        let mut values = Vec::with_capacity(run.traces.len() * n_frames);
        for t in &run.traces {
            values.extend_from_slice(&t.values);
        }
        Ok(Detection {
            labels: run.traces.iter().map(|t| t.wavenumber.to_string()).collect::<Vec<_>>().join(";"),
            values,
            n_frames,
            alarm: run.report.combined_alarm.map_or(-1, |f| f as i32),
            trace_alarms: run.report.traces.iter().map(|a| a.first_alarm.map_or(-1, |f| f as i32)).collect(),
        })
    }
}

#[wasm_bindgen]
impl Simulation {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, seed: u64, advection: f64) -> Result<Simulation, JsError> {
        Self::run(n, seed, advection).map_err(js_err)
    }

    pub fn side(&self) -> usize {
        self.cube.grid.n1
    }

    pub fn n_frames(&self) -> usize {
        self.cube.n_frames()
    }

    pub fn change_frame(&self) -> usize {
        self.change_frame
    }

    /// Row-major field values of frame `k`.
    pub fn frame(&self, k: usize) -> Result<Vec<f64>, JsError> {
        self.cube.frames.get(k).cloned().ok_or_else(|| JsError::new("frame index out of range"))
    }

    /// Runs the filter with the `"proposed"` or `"baseline"` model.
    pub fn detect(&self, model: &str) -> Result<Detection, JsError> {
        let kind = match model {
            "proposed" => ModelKind::Proposed,
            "baseline" => ModelKind::Baseline,
            other => return Err(JsError::new(&format!("unknown model {other:?}"))),
        };
        self.detection(kind).map_err(js_err)
    }
}

/// β-traces and alarms of one detection run.
#[wasm_bindgen]
pub struct Detection {
    labels: String,
    values: Vec<f64>,
    n_frames: usize,
    alarm: i32,
    trace_alarms: Vec<i32>,
}

#[wasm_bindgen]
impl Detection {
    /// Wavenumber labels separated by `;`.
    pub fn labels(&self) -> String {
        self.labels.clone()
    }

    /// Trace values, one block of `n_frames` per label.
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    /// First combined alarm frame, or -1.
    pub fn alarm(&self) -> i32 {
        self.alarm
    }

    /// First alarm frame per trace, or -1.
    pub fn trace_alarms(&self) -> Vec<i32> {
        self.trace_alarms.clone()
    }
}

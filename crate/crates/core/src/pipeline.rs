//! End-to-end helpers: scenario-to-model parameter mapping, filtering with
//! β-trace detection, and the proposed-versus-baseline comparison.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baseline::{assemble_baseline_with_basis, BaselineConfig};
use crate::detection::{beta_traces, detect, AlarmReport, DetectionConfig, ModalTrace};
use crate::dynamics::{assemble_model_with_basis, noise_moments, ModelKind, StateSpaceModel};
use crate::error::{Result, StgpError};
use crate::params::{PhysicalParams, SpaceTimeCube};
use crate::simulator::ScenarioSpec;
use crate::spectral::{basis_matrix, build_wavenumber_sets, periodized_gaussian_1d};
use crate::statespace::{kalman_filter, reconstruct_fields, FilterOptions, FilterResult, ObsNoiseSpec};

/// Model parameters plus observation variance, as stored in parameter files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub params: PhysicalParams,
    pub obs_variance: f64,
    #[serde(default)]
    pub baseline: BaselineConfig,
}

/// Parameters under which a model of `kind` matches a simulated scenario.
///
/// The simulator's diffusion is `∇·Σ∇` (or `½∇·Σ∇` with `half_diffusion`)
/// while the models use `½∇·Σ∇`, so `Σ` is doubled in the first case. The
/// iid forcing is mimicked by a noise shape narrower than a cell,
/// `Φ = min(Δ)²/8`, with `noise_scale` chosen so the per-step α noise
/// variance of one cell equals the forcing variance of one frame: `m₁` for
/// the proposed model, the first-order decay gain (≈ δ) for the baseline.
pub fn scenario_model_params(spec: &ScenarioSpec, kind: ModelKind) -> Result<ModelParams> {
    spec.validate()?;
    let p = &spec.params;
    let factor = if spec.half_diffusion { 1.0 } else { 2.0 };
    let grid = spec.grid()?;
    let sp = grid.spacing();
    let phi = sp[0].min(sp[1]).powi(2) / 8.0;
    let q0 = periodized_gaussian_1d(0.0, phi, spec.extent[0]) * periodized_gaussian_1d(0.0, phi, spec.extent[1]);
    let delta = spec.frame_dt;
    let per_step = match kind {
        ModelKind::Proposed => noise_moments(delta)?.m1,
        ModelKind::Baseline => delta,
    };
    let forcing = spec.forcing.variance.max(1e-12);
    let params = PhysicalParams::new(
        p.mu.clone(),
        p.sigma_diag.iter().map(|s| s * factor).collect(),
        p.eta,
        vec![phi; 2],
        forcing / (per_step * q0),
    )?;
    Ok(ModelParams {
        params,
        obs_variance: spec.obs_noise_variance.max(1e-6),
        baseline: BaselineConfig::default(),
    })
}

/// Builds the proposed or baseline model on the data's grid.
pub fn build_model(kind: ModelKind, mp: &ModelParams, data: &SpaceTimeCube, lowpass: Option<i64>) -> Result<StateSpaceModel> {
    let sets = build_wavenumber_sets(data.grid.n1, data.grid.n2)?;
    let basis = Arc::new(basis_matrix(&data.grid, &sets)?);
    match kind {
        ModelKind::Proposed => assemble_model_with_basis(basis, &sets, &mp.params, data.dt, lowpass),
        ModelKind::Baseline => assemble_baseline_with_basis(basis, &sets, &mp.params, data.dt, &mp.baseline, lowpass),
    }
}

#[derive(Debug, Clone)]
pub struct DetectionRun {
    pub model: StateSpaceModel,
    pub filter: FilterResult,
    pub traces: Vec<ModalTrace>,
    pub report: AlarmReport,
}

/// Filters `data` and runs β-trace detection over the configured watch set.
pub fn filter_and_detect(
    kind: ModelKind,
    mp: &ModelParams,
    data: &SpaceTimeCube,
    cfg: &DetectionConfig,
) -> Result<DetectionRun> {
    let model = build_model(kind, mp, data, None)?;
    let filter = kalman_filter(&model, data, &ObsNoiseSpec::new(mp.obs_variance)?, &FilterOptions::default())?;
    let watch = cfg.resolve_watch(&model);
    let traces = beta_traces(&filter.filtered, &watch)?;
    let report = detect(&traces, cfg)?;
    Ok(DetectionRun { model, filter, traces, report })
}

/// Summary row of one model in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub loglik: f64,
    /// Mean squared difference between filtered value fields and the data.
    pub field_mse: f64,
    /// Mean squared difference between filtered derivative fields and the
    /// frame-to-frame difference quotient of the data.
    pub derivative_mse: f64,
    pub combined_alarm: Option<usize>,
}

pub fn summarize(run: &DetectionRun, data: &SpaceTimeCube) -> Result<ModelSummary> {
    let means = run.filter.means();
    let n = data.grid.len() as f64;
    let (mut fe, mut de) = (0.0, 0.0);
    let mut prev: Option<&Vec<f64>> = None;
    for (m, y) in means.iter().zip(&data.frames) {
        let f = reconstruct_fields(&run.model, m.as_slice())?;
        fe += f.value_field.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
        if let Some(p) = prev {
            de += f
                .derivative_field
                .iter()
                .zip(y.iter().zip(p))
                .map(|(d, (a, b))| (d - (a - b) / data.dt).powi(2))
                .sum::<f64>()
                / n;
        }
        prev = Some(y);
    }
    let k = data.n_frames() as f64;
    let name = match run.model.kind {
        ModelKind::Proposed => "proposed",
        ModelKind::Baseline => "baseline",
    };
    Ok(ModelSummary {
        model: name.into(),
        loglik: run.filter.loglik,
        field_mse: fe / k,
        derivative_mse: if k > 1.0 { de / (k - 1.0) } else { 0.0 },
        combined_alarm: run.report.combined_alarm,
    })
}

/// Runs both models on the same data.
pub fn compare_models(
    proposed: &ModelParams,
    baseline: &ModelParams,
    data: &SpaceTimeCube,
    cfg: &DetectionConfig,
) -> Result<Vec<ModelSummary>> {
    if data.n_frames() < 2 {
        return Err(StgpError::Dimension("comparison needs at least two frames".into()));
    }
    let a = filter_and_detect(ModelKind::Proposed, proposed, data, cfg)?;
    let b = filter_and_detect(ModelKind::Baseline, baseline, data, cfg)?;
    Ok(vec![summarize(&a, data)?, summarize(&b, data)?])
}

//! Change alarms on modal β-traces.
//!
//! Frames are indexed as in the data cube. Frame 0 is the filter's prior
//! step and is skipped, frames `1..=baseline_window` calibrate a robust
//! center (median) and scale (1.4826·MAD), and monitoring starts at
//! `baseline_window + 1`.

use serde::{Deserialize, Serialize};

use crate::dynamics::StateSpaceModel;
use crate::error::{Result, StgpError};
use crate::statespace::{modal_amplitude, Coefficient, Estimates};
use crate::spectral::Wavenumber;

const MAD_TO_SD: f64 = 1.4826;
const SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionMethod {
    #[default]
    Threshold,
    Cusum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    pub method: DetectionMethod,
    pub baseline_window: usize,
    /// Alarm level in baseline spreads (threshold) or the CUSUM decision level.
    pub threshold: f64,
    /// CUSUM allowance per frame, in baseline spreads.
    pub cusum_drift: f64,
    /// Wavenumbers to monitor; `None` means every `max(|k₁|,|k₂|) <= 3`.
    pub watch_set: Option<Vec<Wavenumber>>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { method: DetectionMethod::Threshold, baseline_window: 10, threshold: 4.0, cusum_drift: 0.5, watch_set: None }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.baseline_window < 2 {
            return Err(StgpError::Param("baseline_window must be >= 2".into()));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(StgpError::Param("threshold must be > 0".into()));
        }
        if !(self.cusum_drift.is_finite() && self.cusum_drift >= 0.0) {
            return Err(StgpError::Param("cusum_drift must be >= 0".into()));
        }
        Ok(())
    }

    /// The configured watch set, or the default low-wavenumber set of `model`.
    pub fn resolve_watch(&self, model: &StateSpaceModel) -> Vec<Wavenumber> {
        match &self.watch_set {
            Some(w) => w.clone(),
            None => default_watch_set(model),
        }
    }
}

pub fn default_watch_set(model: &StateSpaceModel) -> Vec<Wavenumber> {
    model.wavenumbers().filter(|k| k.max_abs() <= 3).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalTrace {
    pub wavenumber: Wavenumber,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceAlarm {
    pub wavenumber: Wavenumber,
    pub first_alarm: Option<usize>,
    pub center: f64,
    pub scale: f64,
    /// Baseline spread was zero and the scale was floored.
    pub degenerate: bool,
    /// Largest monitoring statistic seen after the baseline window.
    pub peak_statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmReport {
    pub method: DetectionMethod,
    pub traces: Vec<TraceAlarm>,
    pub combined_alarm: Option<usize>,
}

/// β amplitudes `√(β_R² + β_I²)` for each watched wavenumber.
pub fn beta_traces(est: &Estimates, watch: &[Wavenumber]) -> Result<Vec<ModalTrace>> {
    watch
        .iter()
        .map(|&k| Ok(ModalTrace { wavenumber: k, values: modal_amplitude(est, k, Coefficient::Beta)? }))
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn detect_one(trace: &ModalTrace, cfg: &DetectionConfig) -> Result<TraceAlarm> {
    let w = cfg.baseline_window;
    let x = &trace.values;
    if x.len() <= w + 1 {
        return Err(StgpError::Dimension(format!(
            "trace for {} has {} frames, needs more than {}",
            trace.wavenumber,
            x.len(),
            w + 1
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StgpError::Numerical(format!("trace for {} is not finite", trace.wavenumber)));
    }
    let mut base = x[1..=w].to_vec();
    let center = median(&mut base);
    let mut dev: Vec<f64> = base.iter().map(|v| (v - center).abs()).collect();
    let raw = MAD_TO_SD * median(&mut dev);
    let degenerate = !(raw > SCALE_FLOOR);
    let scale = raw.max(SCALE_FLOOR);
    let mut first = None;
    let mut peak = 0.0f64;
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for (t, v) in x.iter().enumerate().skip(w + 1) {
        let z = (v - center) / scale;
        let stat = match cfg.method {
            DetectionMethod::Threshold => z.abs(),
            DetectionMethod::Cusum => {
                hi = (hi + z - cfg.cusum_drift).max(0.0);
                lo = (lo - z - cfg.cusum_drift).max(0.0);
                hi.max(lo)
            }
        };
        peak = peak.max(stat);
        if first.is_none() && stat > cfg.threshold {
            first = Some(t);
        }
    }
    Ok(TraceAlarm { wavenumber: trace.wavenumber, first_alarm: first, center, scale, degenerate, peak_statistic: peak })
}

/// Applies the configured rule to every trace; the combined alarm is the
/// earliest alarm across traces.
pub fn detect(traces: &[ModalTrace], cfg: &DetectionConfig) -> Result<AlarmReport> {
    cfg.validate()?;
    let alarms = traces.iter().map(|t| detect_one(t, cfg)).collect::<Result<Vec<_>>>()?;
    let combined_alarm = alarms.iter().filter_map(|a| a.first_alarm).min();
    Ok(AlarmReport { method: cfg.method, traces: alarms, combined_alarm })
}

//! Maximum-likelihood fitting by Adam on the Kalman log-likelihood.
//!
//! Positive parameters are optimized in log coordinates and the advection
//! vector as-is. Gradients are central finite differences, one filter run
//! per probe.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::assemble_model_with_basis;
use crate::error::{Result, StgpError};
use crate::par;
use crate::params::{PhysicalParams, SpaceTimeCube};
use crate::spectral::{basis_matrix, build_wavenumber_sets, BasisMatrix, WavenumberSets};
use crate::statespace::{kalman_filter, FilterOptions, ObsNoiseSpec, PriorSpec};

/// Objective value reported for parameters where the filter fails.
pub const PENALTY: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, max_iters: 500, grad_tol: 1e-5, fd_step: 1e-4 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.learning_rate > 0.0 && unit(self.beta1) && unit(self.beta2) && self.eps > 0.0 && self.fd_step > 0.0) {
            return Err(StgpError::Param(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// Which parameters get their own coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamLayout {
    /// `[μ₁, μ₂, ln σ, ln η, ln φ, ln scale, ln obs]` with tied axes.
    #[default]
    Isotropic,
    /// `[μ₁, μ₂, ln σ₁, ln σ₂, ln η, ln φ₁, ln φ₂, ln scale, ln obs]`.
    Anisotropic,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        match self {
            ParamLayout::Isotropic => 7,
            ParamLayout::Anisotropic => 9,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> &'static [&'static str] {
        match self {
            ParamLayout::Isotropic => &["mu1", "mu2", "ln_sigma", "ln_eta", "ln_phi", "ln_noise_scale", "ln_obs_variance"],
            ParamLayout::Anisotropic => &[
                "mu1",
                "mu2",
                "ln_sigma1",
                "ln_sigma2",
                "ln_eta",
                "ln_phi1",
                "ln_phi2",
                "ln_noise_scale",
                "ln_obs_variance",
            ],
        }
    }
}

fn ln_pos(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x.ln())
    } else {
        Err(StgpError::Param(format!("{what} must be > 0 to transform, got {x}")))
    }
}

/// Maps parameters and observation variance to unconstrained coordinates.
pub fn transform(p: &PhysicalParams, obs_variance: f64, layout: ParamLayout) -> Result<Vec<f64>> {
    if p.dim() != 2 {
        return Err(StgpError::Param("estimation needs two-dimensional parameters".into()));
    }
    let mut v = vec![p.mu[0], p.mu[1]];
    match layout {
        ParamLayout::Isotropic => {
            if p.sigma_diag[0] != p.sigma_diag[1] || p.noise_shape_diag[0] != p.noise_shape_diag[1] {
                return Err(StgpError::Param("isotropic layout needs equal per-axis sigma and phi".into()));
            }
            v.push(ln_pos(p.sigma_diag[0], "sigma")?);
            v.push(ln_pos(p.eta, "eta")?);
            v.push(ln_pos(p.noise_shape_diag[0], "phi")?);
        }
        ParamLayout::Anisotropic => {
            v.push(ln_pos(p.sigma_diag[0], "sigma")?);
            v.push(ln_pos(p.sigma_diag[1], "sigma")?);
            v.push(ln_pos(p.eta, "eta")?);
            v.push(ln_pos(p.noise_shape_diag[0], "phi")?);
            v.push(ln_pos(p.noise_shape_diag[1], "phi")?);
        }
    }
    v.push(ln_pos(p.noise_scale, "noise_scale")?);
    v.push(ln_pos(obs_variance, "obs_variance")?);
    Ok(v)
}

/// Inverse of [`transform`]. Any finite input decodes to valid parameters.
pub fn inverse_transform(x: &[f64], layout: ParamLayout) -> Result<(PhysicalParams, f64)> {
    if x.len() != layout.len() {
        return Err(StgpError::Dimension(format!("expected {} coordinates, got {}", layout.len(), x.len())));
    }
    let e = |i: usize| x[i].exp();
    let p = match layout {
        ParamLayout::Isotropic => PhysicalParams {
            mu: vec![x[0], x[1]],
            sigma_diag: vec![e(2); 2],
            eta: e(3),
            noise_shape_diag: vec![e(4); 2],
            noise_scale: e(5),
        },
        ParamLayout::Anisotropic => PhysicalParams {
            mu: vec![x[0], x[1]],
            sigma_diag: vec![e(2), e(3)],
            eta: e(4),
            noise_shape_diag: vec![e(5), e(6)],
            noise_scale: e(7),
        },
    };
    let obs = e(layout.len() - 1);
    p.validate()?;
    ObsNoiseSpec::new(obs)?;
    Ok((p, obs))
}

/// Data, basis and settings shared by every objective evaluation.
#[derive(Debug, Clone)]
pub struct FitProblem {
    data: SpaceTimeCube,
    basis: Arc<BasisMatrix>,
    sets: WavenumberSets,
    pub layout: ParamLayout,
    pub lowpass: Option<i64>,
    pub prior: PriorSpec,
    /// Indices of coordinates held at their initial value.
    pub frozen: Vec<usize>,
}

impl FitProblem {
    /// With `remove_mean`, every frame's spatial mean is subtracted first.
    pub fn new(data: &SpaceTimeCube, layout: ParamLayout, remove_mean: bool) -> Result<Self> {
        data.validate()?;
        if data.n_frames() < 3 {
            return Err(StgpError::Dimension(format!("need at least 3 frames, got {}", data.n_frames())));
        }
        let sets = build_wavenumber_sets(data.grid.n1, data.grid.n2)?;
        let basis = Arc::new(basis_matrix(&data.grid, &sets)?);
        let data = if remove_mean { data.demeaned() } else { data.clone() };
        Ok(Self { data, basis, sets, layout, lowpass: None, prior: PriorSpec::Stationary, frozen: Vec::new() })
    }

    pub fn data(&self) -> &SpaceTimeCube {
        &self.data
    }

    /// Log-likelihood at decoded coordinates.
    pub fn loglik(&self, x: &[f64]) -> Result<f64> {
        let (p, obs) = inverse_transform(x, self.layout)?;
        let model = assemble_model_with_basis(self.basis.clone(), &self.sets, &p, self.data.dt, self.lowpass)?;
        let opts = FilterOptions { prior: self.prior, ..Default::default() };
        Ok(kalman_filter(&model, &self.data, &ObsNoiseSpec::new(obs)?, &opts)?.loglik)
    }

    /// `-loglik`, or [`PENALTY`] where the filter fails.
    pub fn objective(&self, x: &[f64]) -> f64 {
        match self.loglik(x) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => PENALTY,
        }
    }
}

/// Objective value, gradient, and the coordinates whose probes failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveGrad {
    pub value: f64,
    pub grad: Vec<f64>,
    pub failed: Vec<usize>,
}

fn fd_h(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

/// Central-difference gradient of the negative log-likelihood.
pub fn neg_loglik_grad(problem: &FitProblem, x: &[f64], fd_step: f64) -> ObjectiveGrad {
    let d = x.len();
    let evals = par::map_range(2 * d + 1, |i| {
        if i == 2 * d {
            return problem.objective(x);
        }
        let (j, sign) = (i / 2, if i % 2 == 0 { 1.0 } else { -1.0 });
        if problem.frozen.contains(&j) {
            return 0.0;
        }
        let mut y = x.to_vec();
        y[j] += sign * fd_h(x[j], fd_step);
        problem.objective(&y)
    });
    let mut grad = vec![0.0; d];
    let mut failed = Vec::new();
    for j in 0..d {
        if problem.frozen.contains(&j) {
            continue;
        }
        let (fp, fm) = (evals[2 * j], evals[2 * j + 1]);
        if fp >= PENALTY || fm >= PENALTY {
            failed.push(j);
        } else {
            grad[j] = (fp - fm) / (2.0 * fd_h(x[j], fd_step));
        }
    }
    ObjectiveGrad { value: evals[2 * d], grad, failed }
}

/// Adam moment state.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    /// Applies one update to `x` in place and returns the step taken.
    pub fn step(&mut self, x: &mut [f64], g: &[f64], cfg: &OptimizerConfig) -> Vec<f64> {
        self.t += 1;
        let (b1t, b2t) = (1.0 - cfg.beta1.powi(self.t), 1.0 - cfg.beta2.powi(self.t));
        let mut delta = vec![0.0; x.len()];
        for i in 0..x.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            delta[i] = -cfg.learning_rate * mh / (vh.sqrt() + cfg.eps);
            x[i] += delta[i];
        }
        delta
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: PhysicalParams,
    pub obs_variance: f64,
    /// Objective at each visited iterate, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub best_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Probe failures summed over iterations.
    pub failed_probes: usize,
}

/// Fits parameters starting from `init`; returns the best iterate seen.
pub fn fit(problem: &FitProblem, init: &PhysicalParams, init_obs: f64, cfg: &OptimizerConfig) -> Result<FitResult> {
    cfg.validate()?;
    let mut x = transform(init, init_obs, problem.layout)?;
    let mut adam = AdamState::new(x.len());
    let mut trace = Vec::new();
    let mut best = (f64::INFINITY, x.clone());
    let mut failed_probes = 0;
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let eval = if iterations < cfg.max_iters {
            neg_loglik_grad(problem, &x, cfg.fd_step)
        } else {
            ObjectiveGrad { value: problem.objective(&x), grad: vec![0.0; x.len()], failed: vec![] }
        };
        if iterations == 0 && eval.value >= PENALTY {
            return Err(StgpError::Estimation(
                "the filter fails at the initial parameters; check the time step and parameter scales".into(),
            ));
        }
        trace.push(eval.value);
        if eval.value < best.0 {
            best = (eval.value, x.clone());
        }
        failed_probes += eval.failed.len();
        if iterations >= cfg.max_iters {
            break;
        }
        if eval.failed.len() == x.len() - problem.frozen.len() && !eval.failed.is_empty() {
            return Err(StgpError::Estimation(format!(
                "every finite-difference probe failed at iteration {iterations} (objective {})",
                eval.value
            )));
        }
        let gnorm = eval.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < cfg.grad_tol {
            converged = true;
            break;
        }
        if eval.value >= PENALTY {
            // Step back toward the best point when the iterate is infeasible.
            x = best.1.clone();
            adam = AdamState::new(x.len());
        }
        adam.step(&mut x, &eval.grad, cfg);
        for &j in &problem.frozen {
            x[j] = best.1[j];
        }
        iterations += 1;
    }
    let (params, obs_variance) = inverse_transform(&best.1, problem.layout)?;
    Ok(FitResult { params, obs_variance, objective_trace: trace, best_objective: best.0, iterations, converged, failed_probes })
}

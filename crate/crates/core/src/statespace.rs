//! Kalman filtering, RTS smoothing and field reconstruction.
//!
//! Two update paths share one result layout. The coupled path runs the dense
//! `n x n` innovation update on the full state. On the full regular grid the
//! basis columns are orthogonal, so `z = D⁻¹Bᵀy` (with `D = BᵀB`) observes
//! every coefficient independently with variance `σ²/D_jj`; the decoupled
//! path then filters each block on its own and adds the Jacobian term
//! `-½ Σ ln D_jj` so both paths return the same likelihood of `y`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{Block, ModalSlots, StateSpaceModel};
use crate::error::{Result, StgpError};
use crate::par;
use crate::params::SpaceTimeCube;
use crate::spectral::Wavenumber;

/// iid per-cell observation noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsNoiseSpec {
    pub variance: f64,
}

impl ObsNoiseSpec {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(StgpError::Param(format!("observation variance must be > 0, got {variance}")));
        }
        Ok(Self { variance })
    }
}

/// Distribution of the state at the first frame. The mean is always zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PriorSpec {
    /// Per-block stationary covariance, or 10x the block's process noise
    /// when the block is not stable.
    #[default]
    Stationary,
    /// `c` times each block's process-noise covariance.
    NoiseMultiple(f64),
    /// `c · I`.
    Isotropic(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterMode {
    /// Decoupled whenever the basis is square, coupled otherwise.
    #[default]
    Auto,
    Coupled,
    Decoupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterPath {
    Coupled,
    Decoupled,
}

impl std::fmt::Display for FilterPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterPath::Coupled => "coupled",
            FilterPath::Decoupled => "decoupled",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FilterOptions {
    pub prior: PriorSpec,
    pub mode: FilterMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficient {
    Alpha,
    Beta,
}

/// Means and covariances over time for a partition of the state.
///
/// Each part covers a contiguous run of state indices: one part per block on
/// the decoupled path, a single full-state part on the coupled path.
#[derive(Debug, Clone)]
pub struct Estimates {
    pub(crate) parts: Vec<EstimatePart>,
    state_dim: usize,
    slots: Arc<HashMap<Wavenumber, ModalSlots>>,
}

#[derive(Debug, Clone)]
pub(crate) struct EstimatePart {
    pub(crate) offset: usize,
    pub(crate) means: Vec<DVector<f64>>,
    pub(crate) covs: Vec<DMatrix<f64>>,
}

impl Estimates {
    pub fn n_steps(&self) -> usize {
        self.parts.first().map_or(0, |p| p.means.len())
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn mean(&self, k: usize) -> DVector<f64> {
        let mut m = DVector::zeros(self.state_dim);
        for p in &self.parts {
            m.rows_mut(p.offset, p.means[k].len()).copy_from(&p.means[k]);
        }
        m
    }

    /// `K x state_dim` means.
    pub fn means(&self) -> Vec<DVector<f64>> {
        (0..self.n_steps()).map(|k| self.mean(k)).collect()
    }

    /// Full covariance at step `k` (block-diagonal on the decoupled path).
    pub fn covariance(&self, k: usize) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.state_dim, self.state_dim);
        for p in &self.parts {
            let s = p.covs[k].nrows();
            c.view_mut((p.offset, p.offset), (s, s)).copy_from(&p.covs[k]);
        }
        c
    }

    /// `(offset, covariance)` of every part at step `k`.
    pub fn covariance_blocks(&self, k: usize) -> impl Iterator<Item = (usize, &DMatrix<f64>)> {
        self.parts.iter().map(move |p| (p.offset, &p.covs[k]))
    }

    pub fn trace(&self, k: usize) -> f64 {
        self.parts.iter().map(|p| p.covs[k].trace()).sum()
    }

    pub fn slots(&self, k: Wavenumber) -> Result<ModalSlots> {
        self.slots.get(&k).copied().ok_or(StgpError::UnknownWavenumber(k.0, k.1))
    }
}

/// Output of [`kalman_filter`].
#[derive(Debug, Clone)]
pub struct FilterResult {
    pub filtered: Estimates,
    /// One-step-ahead predictions; step 0 holds the prior.
    pub predicted: Estimates,
    /// Physical-space innovations `y_k - H m_{k|k-1}`.
    pub innovations: Vec<DVector<f64>>,
    pub loglik: f64,
    pub mode: FilterPath,
}

impl FilterResult {
    pub fn n_steps(&self) -> usize {
        self.filtered.n_steps()
    }

    pub fn means(&self) -> Vec<DVector<f64>> {
        self.filtered.means()
    }
}

/// A value field and its time-derivative field on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub value_field: Vec<f64>,
    pub derivative_field: Vec<f64>,
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let t = p.transpose();
    *p += t;
    *p *= 0.5;
}

fn check_psd(p: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = p.diagonal().amax().max(f64::MIN_POSITIVE);
    if p.iter().any(|v| !v.is_finite()) || p.diagonal().iter().any(|&d| d < -1e-9 * scale) {
        return Err(StgpError::Numerical(format!(
            "{what} covariance lost positive semi-definiteness; the time step or parameters make the model unstable"
        )));
    }
    Ok(())
}

fn block_prior(b: &Block, prior: PriorSpec) -> DMatrix<f64> {
    match prior {
        PriorSpec::Stationary => b.stationary_covariance(1e-10).unwrap_or_else(|| &b.noise_cov * 10.0),
        PriorSpec::NoiseMultiple(c) => &b.noise_cov * c,
        PriorSpec::Isotropic(c) => DMatrix::identity(b.size(), b.size()) * c,
    }
}

fn validate_inputs(model: &StateSpaceModel, data: &SpaceTimeCube, noise: &ObsNoiseSpec, prior: PriorSpec) -> Result<()> {
    ObsNoiseSpec::new(noise.variance)?;
    data.validate()?;
    if data.grid.len() != model.n_obs() {
        return Err(StgpError::Dimension(format!(
            "frames have {} cells, model observes {}",
            data.grid.len(),
            model.n_obs()
        )));
    }
    if (data.dt - model.dt).abs() > 1e-9 * model.dt {
        return Err(StgpError::Dimension(format!("data spacing {} differs from model step {}", data.dt, model.dt)));
    }
    if data.n_frames() == 0 {
        return Err(StgpError::Dimension("no frames to filter".into()));
    }
    match prior {
        PriorSpec::NoiseMultiple(c) | PriorSpec::Isotropic(c) if !(c.is_finite() && c >= 0.0) => {
            Err(StgpError::Param(format!("prior scale must be >= 0, got {c}")))
        }
        _ => Ok(()),
    }
}

/// Runs the Kalman filter and accumulates the exact Gaussian log-likelihood.
pub fn kalman_filter(
    model: &StateSpaceModel,
    data: &SpaceTimeCube,
    noise: &ObsNoiseSpec,
    opts: &FilterOptions,
) -> Result<FilterResult> {
    validate_inputs(model, data, noise, opts.prior)?;
    let square = model.basis.ncols() == model.n_obs();
    let path = match opts.mode {
        FilterMode::Auto if square => FilterPath::Decoupled,
        FilterMode::Auto | FilterMode::Coupled => FilterPath::Coupled,
        FilterMode::Decoupled if square => FilterPath::Decoupled,
        FilterMode::Decoupled => {
            return Err(StgpError::Dimension("decoupled filtering needs a complete basis".into()));
        }
    };
    let (filtered, predicted, loglik) = match path {
        FilterPath::Decoupled => filter_decoupled(model, data, noise.variance, opts.prior)?,
        FilterPath::Coupled => filter_coupled(model, data, noise.variance, opts.prior)?,
    };
    let slots = Arc::new(model.slot_index());
    let filtered = Estimates { parts: filtered, state_dim: model.state_dim, slots: slots.clone() };
    let predicted = Estimates { parts: predicted, state_dim: model.state_dim, slots };
    let innovations = innovations(model, data, &predicted);
    Ok(FilterResult { filtered, predicted, innovations, loglik, mode: path })
}

fn innovations(model: &StateSpaceModel, data: &SpaceTimeCube, predicted: &Estimates) -> Vec<DVector<f64>> {
    par::map_range(data.n_frames(), |k| {
        let m = predicted.mean(k);
        let y = DVector::from_column_slice(&data.frames[k]);
        let mut alpha = vec![0.0; model.basis.ncols()];
        for b in &model.blocks {
            for &(local, col) in &b.observed {
                alpha[col] = m[b.offset + local];
            }
        }
        y - DVector::from_vec(model.basis.reconstruct(&alpha))
    })
}

type PathOutput = (Vec<EstimatePart>, Vec<EstimatePart>, f64);

fn filter_decoupled(model: &StateSpaceModel, data: &SpaceTimeCube, var: f64, prior: PriorSpec) -> Result<PathOutput> {
    let basis = &model.basis;
    let r: Vec<f64> = basis.norms().iter().map(|d| var / d).collect();
    let coeffs: Vec<Vec<f64>> = par::map(&data.frames, |f| basis.project(f));
    let runs = par::map(&model.blocks, |b| filter_block(b, &coeffs, &r, prior));
    let mut filtered = Vec::with_capacity(runs.len());
    let mut predicted = Vec::with_capacity(runs.len());
    let mut loglik = 0.0;
    for run in runs {
        let (f, p, ll) = run?;
        filtered.push(f);
        predicted.push(p);
        loglik += ll;
    }
    for col in model.unobserved_columns() {
        for c in &coeffs {
            loglik -= 0.5 * ((2.0 * PI * r[col]).ln() + c[col] * c[col] / r[col]);
        }
    }
    let log_det_d: f64 = basis.norms().iter().map(|d| d.ln()).sum();
    loglik -= 0.5 * data.n_frames() as f64 * log_det_d;
    if !loglik.is_finite() {
        return Err(StgpError::Numerical("log-likelihood is not finite".into()));
    }
    Ok((filtered, predicted, loglik))
}

fn filter_block(
    b: &Block,
    coeffs: &[Vec<f64>],
    r: &[f64],
    prior: PriorSpec,
) -> Result<(EstimatePart, EstimatePart, f64)> {
    let s = b.size();
    let steps = coeffs.len();
    let g = &b.transition;
    let mut m = DVector::zeros(s);
    let mut p = block_prior(b, prior);
    let mut filt = EstimatePart { offset: b.offset, means: Vec::with_capacity(steps), covs: Vec::with_capacity(steps) };
    let mut pred = filt.clone();
    let mut ll = 0.0;
    let eye = DMatrix::<f64>::identity(s, s);
    for (k, z) in coeffs.iter().enumerate() {
        if k > 0 {
            m = g * &m;
            p = g * &p * g.transpose() + &b.noise_cov;
            symmetrize(&mut p);
        }
        pred.means.push(m.clone());
        pred.covs.push(p.clone());
        for &(local, col) in &b.observed {
            let innov = z[col] - m[local];
            let sv = p[(local, local)] + r[col];
            if !(sv > 0.0 && sv.is_finite()) {
                return Err(StgpError::Numerical(format!(
                    "non-positive innovation variance at wavenumber {}",
                    b.wavenumber
                )));
            }
            let gain = p.column(local) / sv;
            m += &gain * innov;
            let mut a = eye.clone();
            for i in 0..s {
                a[(i, local)] -= gain[i];
            }
            p = &a * &p * a.transpose() + &gain * gain.transpose() * r[col];
            symmetrize(&mut p);
            ll -= 0.5 * ((2.0 * PI * sv).ln() + innov * innov / sv);
        }
        check_psd(&p, "filtered")?;
        filt.means.push(m.clone());
        filt.covs.push(p.clone());
    }
    Ok((filt, pred, ll))
}

/// Cholesky factor with escalating diagonal jitter starting at `1e-10·trace`.
fn robust_cholesky(s: &DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = s.clone().cholesky() {
        return Some(c);
    }
    let base = (s.trace().abs() / s.nrows().max(1) as f64).max(f64::MIN_POSITIVE) * 1e-10;
    (0..6).find_map(|i| {
        let jitter = base * 10f64.powi(i);
        (s + DMatrix::identity(s.nrows(), s.ncols()) * jitter).cholesky()
    })
}

fn filter_coupled(model: &StateSpaceModel, data: &SpaceTimeCube, var: f64, prior: PriorSpec) -> Result<PathOutput> {
    let h = model.obs_map();
    let g = model.transition_matrix();
    let v = model.noise_cov_matrix();
    let n = model.n_obs();
    let dim = model.state_dim;
    let mut p = DMatrix::zeros(dim, dim);
    for b in &model.blocks {
        p.view_mut((b.offset, b.offset), (b.size(), b.size())).copy_from(&block_prior(b, prior));
    }
    let mut m = DVector::zeros(dim);
    let steps = data.n_frames();
    let mut filt = EstimatePart { offset: 0, means: Vec::with_capacity(steps), covs: Vec::with_capacity(steps) };
    let mut pred = filt.clone();
    let mut ll = 0.0;
    let eye = DMatrix::<f64>::identity(dim, dim);
    for (k, frame) in data.frames.iter().enumerate() {
        if k > 0 {
            m = &g * &m;
            p = &g * &p * g.transpose() + &v;
            symmetrize(&mut p);
        }
        pred.means.push(m.clone());
        pred.covs.push(p.clone());
        let y = DVector::from_column_slice(frame);
        let innov = y - &h * &m;
        let hp = &h * &p;
        let mut s = &hp * h.transpose();
        for i in 0..n {
            s[(i, i)] += var;
        }
        let chol = robust_cholesky(&s)
            .ok_or_else(|| StgpError::Numerical(format!("innovation covariance not positive definite at frame {k}")))?;
        let gain = chol.solve(&hp).transpose();
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let quad = innov.dot(&chol.solve(&innov));
        ll -= 0.5 * (n as f64 * (2.0 * PI).ln() + log_det + quad);
        m += &gain * innov;
        let a = &eye - &gain * &h;
        p = &a * &p * a.transpose() + &gain * gain.transpose() * var;
        symmetrize(&mut p);
        check_psd(&p, "filtered")?;
        filt.means.push(m.clone());
        filt.covs.push(p.clone());
    }
    if !ll.is_finite() {
        return Err(StgpError::Numerical("log-likelihood is not finite".into()));
    }
    Ok((vec![filt], vec![pred], ll))
}

/// Solves `X · A = B` for symmetric PSD `A`, regularizing when singular.
fn solve_right_psd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    match robust_cholesky(a) {
        Some(c) => c.solve(&b.transpose()).transpose(),
        None => {
            let pinv = a.clone().pseudo_inverse(1e-12 * a.amax().max(f64::MIN_POSITIVE)).unwrap_or_else(|_| a.clone() * 0.0);
            b * pinv
        }
    }
}

/// Fixed-interval Rauch-Tung-Striebel smoother.
pub fn rts_smoother(model: &StateSpaceModel, result: &FilterResult) -> Result<Estimates> {
    let transitions: Vec<DMatrix<f64>> = match result.mode {
        FilterPath::Decoupled => model.blocks.iter().map(|b| b.transition.clone()).collect(),
        FilterPath::Coupled => vec![model.transition_matrix()],
    };
    if transitions.len() != result.filtered.parts.len() || result.filtered.state_dim != model.state_dim {
        return Err(StgpError::Dimension("filter result was produced by a different model".into()));
    }
    let parts = par::map_range(transitions.len(), |i| {
        let g = &transitions[i];
        let f = &result.filtered.parts[i];
        let pr = &result.predicted.parts[i];
        let steps = f.means.len();
        let mut means = f.means.clone();
        let mut covs = f.covs.clone();
        for k in (0..steps.saturating_sub(1)).rev() {
            let c = solve_right_psd(&pr.covs[k + 1], &(&f.covs[k] * g.transpose()));
            means[k] = &f.means[k] + &c * (&means[k + 1] - &pr.means[k + 1]);
            let mut p = &f.covs[k] + &c * (&covs[k + 1] - &pr.covs[k + 1]) * c.transpose();
            symmetrize(&mut p);
            covs[k] = p;
        }
        EstimatePart { offset: f.offset, means, covs }
    });
    Ok(Estimates { parts, state_dim: model.state_dim, slots: result.filtered.slots.clone() })
}

/// Value and derivative fields of a state vector.
pub fn reconstruct_fields(model: &StateSpaceModel, coeffs: &[f64]) -> Result<FieldPair> {
    if coeffs.len() != model.state_dim {
        return Err(StgpError::Dimension(format!(
            "state vector has {} entries, model has {}",
            coeffs.len(),
            model.state_dim
        )));
    }
    let j = model.basis.ncols();
    let (mut alpha, mut beta) = (vec![0.0; j], vec![0.0; j]);
    for b in &model.blocks {
        for &(local, col) in &b.observed {
            let beta_local = if local == b.slots.alpha_r { b.slots.beta_r } else { b.slots.beta_i.unwrap_or(b.slots.beta_r) };
            alpha[col] = coeffs[b.offset + local];
            beta[col] = coeffs[b.offset + beta_local];
        }
    }
    Ok(FieldPair { value_field: model.basis.reconstruct(&alpha), derivative_field: model.basis.reconstruct(&beta) })
}

/// Per-step magnitude `√(R² + I²)` of a wavenumber's α or β pair.
pub fn modal_amplitude(est: &Estimates, k: Wavenumber, which: Coefficient) -> Result<Vec<f64>> {
    let sl = est.slots(k)?;
    let (r, i) = match which {
        Coefficient::Alpha => (sl.alpha_r, sl.alpha_i),
        Coefficient::Beta => (sl.beta_r, sl.beta_i),
    };
    let locate = |idx: usize| {
        est.parts
            .iter()
            .find(|p| idx >= p.offset && idx < p.offset + p.means.first().map_or(0, |m| m.len()))
            .map(|p| (p, idx - p.offset))
    };
    let (pr, lr) = locate(r).ok_or(StgpError::UnknownWavenumber(k.0, k.1))?;
    let imag = i.and_then(locate);
    Ok((0..est.n_steps())
        .map(|t| {
            let re = pr.means[t][lr];
            let im = imag.map_or(0.0, |(p, l)| p.means[t][l]);
            re.hypot(im)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::assemble_model;
    use crate::params::{make_grid, PhysicalParams};
    use crate::spectral::build_wavenumber_sets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn model_4x4(p: &PhysicalParams, delta: f64) -> StateSpaceModel {
        let g = make_grid(4, 4, 1.0).unwrap();
        let s = build_wavenumber_sets(4, 4).unwrap();
        assemble_model(&g, &s, p, delta, None).unwrap()
    }

    fn random_cube(n_frames: usize, seed: u64, dt: f64) -> SpaceTimeCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..n_frames).map(|_| (0..16).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        SpaceTimeCube::new(make_grid(4, 4, 1.0).unwrap(), dt, 0.0, frames).unwrap()
    }

    fn joint_loglik(model: &StateSpaceModel, data: &SpaceTimeCube, var: f64, p0: &DMatrix<f64>) -> f64 {
        let h = model.obs_map();
        let g = model.transition_matrix();
        let v = model.noise_cov_matrix();
        let steps = data.n_frames();
        let n = model.n_obs();
        let mut marg = vec![p0.clone()];
        for k in 1..steps {
            let prev = &marg[k - 1];
            marg.push(&g * prev * g.transpose() + &v);
        }
        let mut big = DMatrix::zeros(steps * n, steps * n);
        for k in 0..steps {
            for l in 0..=k {
                let cross = g.pow((k - l) as u32) * &marg[l];
                let block = &h * cross * h.transpose();
                big.view_mut((k * n, l * n), (n, n)).copy_from(&block);
                big.view_mut((l * n, k * n), (n, n)).copy_from(&block.transpose());
            }
            for i in 0..n {
                big[(k * n + i, k * n + i)] += var;
            }
        }
        let y = DVector::from_iterator(steps * n, data.frames.iter().flatten().copied());
        let c = big.cholesky().unwrap();
        let log_det = 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        -0.5 * ((steps * n) as f64 * (2.0 * PI).ln() + log_det + y.dot(&c.solve(&y)))
    }

    fn prior_matrix(model: &StateSpaceModel) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(model.state_dim, model.state_dim);
        for b in &model.blocks {
            p.view_mut((b.offset, b.offset), (b.size(), b.size())).copy_from(&block_prior(b, PriorSpec::Stationary));
        }
        p
    }

    #[test]
    fn loglik_matches_joint_gaussian() {
        let p = PhysicalParams::isotropic([1.0, 0.0], 0.02, 0.1, 0.01, 1.0).unwrap();
        let model = model_4x4(&p, 0.1);
        let data = random_cube(5, 3, 0.1);
        let noise = ObsNoiseSpec::new(0.3).unwrap();
        let oracle = joint_loglik(&model, &data, 0.3, &prior_matrix(&model));
        let coupled =
            kalman_filter(&model, &data, &noise, &FilterOptions { mode: FilterMode::Coupled, ..Default::default() }).unwrap();
        let decoupled =
            kalman_filter(&model, &data, &noise, &FilterOptions { mode: FilterMode::Decoupled, ..Default::default() })
                .unwrap();
        assert_eq!(coupled.mode, FilterPath::Coupled);
        assert_eq!(decoupled.mode, FilterPath::Decoupled);
        assert!((coupled.loglik - oracle).abs() < 1e-6, "{} vs {oracle}", coupled.loglik);
        assert!((decoupled.loglik - oracle).abs() < 1e-6);
        assert!((decoupled.loglik - coupled.loglik).abs() < 1e-8);
        for k in 0..5 {
            assert!((coupled.filtered.mean(k) - decoupled.filtered.mean(k)).amax() < 1e-9);
            assert!((coupled.filtered.covariance(k) - decoupled.filtered.covariance(k)).amax() < 1e-9);
            assert!((&coupled.innovations[k] - &decoupled.innovations[k]).amax() < 1e-9);
        }
    }

    #[test]
    fn lowpass_paths_agree() {
        let p = PhysicalParams::isotropic([0.5, 0.2], 0.01, 0.3, 0.02, 1.0).unwrap();
        let g = make_grid(4, 4, 1.0).unwrap();
        let s = build_wavenumber_sets(4, 4).unwrap();
        let model = assemble_model(&g, &s, &p, 0.1, Some(1)).unwrap();
        let data = random_cube(4, 9, 0.1);
        let noise = ObsNoiseSpec::new(0.5).unwrap();
        let oracle = joint_loglik(&model, &data, 0.5, &prior_matrix(&model));
        let c = kalman_filter(&model, &data, &noise, &FilterOptions { mode: FilterMode::Coupled, ..Default::default() })
            .unwrap();
        let d = kalman_filter(&model, &data, &noise, &FilterOptions::default()).unwrap();
        assert!((c.loglik - oracle).abs() < 1e-6);
        assert!((d.loglik - c.loglik).abs() < 1e-8);
    }

    #[test]
    fn noiseless_state_is_recovered() {
        let p = PhysicalParams::isotropic([0.0, 0.0], 0.002, 0.5, 0.005, 1.0).unwrap();
        let mut model = model_4x4(&p, 0.1);
        for b in &mut model.blocks {
            b.noise_cov.fill(0.0);
            b.noise_factor.fill(0.0);
        }
        let g = model.transition_matrix();
        let h = model.obs_map();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut theta = DVector::from_fn(model.state_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut frames = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..50 {
            let y = &h * &theta + DVector::from_fn(16, |_, _| 1e-8 * rng.sample::<f64, _>(StandardNormal));
            frames.push(y.iter().copied().collect());
            truth.push(theta.clone());
            theta = &g * &theta;
        }
        let data = SpaceTimeCube::new(make_grid(4, 4, 1.0).unwrap(), 0.1, 0.0, frames).unwrap();
        let noise = ObsNoiseSpec::new(1e-16).unwrap();
        let opts = FilterOptions { prior: PriorSpec::Isotropic(1.0), ..Default::default() };
        let res = kalman_filter(&model, &data, &noise, &opts).unwrap();
        assert!((res.filtered.mean(49) - &truth[49]).amax() < 1e-6);
        let sm = rts_smoother(&model, &res).unwrap();
        assert!((sm.mean(10) - &truth[10]).amax() < 1e-6);
    }

    #[test]
    fn filter_is_linear_in_data() {
        let p = PhysicalParams::isotropic([1.0, 0.0], 0.02, 0.1, 0.01, 1.0).unwrap();
        let p4 = PhysicalParams { noise_scale: 4.0, ..p.clone() };
        let data = random_cube(6, 5, 0.1);
        let scaled = SpaceTimeCube { frames: data.frames.iter().map(|f| f.iter().map(|v| 2.0 * v).collect()).collect(), ..data.clone() };
        let a = kalman_filter(&model_4x4(&p, 0.1), &data, &ObsNoiseSpec::new(0.2).unwrap(), &FilterOptions::default()).unwrap();
        let b = kalman_filter(&model_4x4(&p4, 0.1), &scaled, &ObsNoiseSpec::new(0.8).unwrap(), &FilterOptions::default())
            .unwrap();
        for k in 0..6 {
            let (ma, mb) = (a.filtered.mean(k), b.filtered.mean(k));
            assert!((mb - &ma * 2.0).amax() < 1e-10 * ma.amax().max(1.0));
        }
        assert!((b.loglik - (a.loglik - 6.0 * 16.0 * 2f64.ln())).abs() < 1e-8);
    }

    #[test]
    fn smoother_trace_never_exceeds_filter() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let p = PhysicalParams::new(
                vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                vec![rng.random_range(0.001..0.05), rng.random_range(0.001..0.05)],
                rng.random_range(0.05..1.0),
                vec![rng.random_range(0.005..0.05), rng.random_range(0.005..0.05)],
                rng.random_range(0.5..2.0),
            )
            .unwrap();
            let model = model_4x4(&p, 0.1);
            let data = random_cube(8, seed, 0.1);
            let mode = if seed % 2 == 0 { FilterMode::Coupled } else { FilterMode::Decoupled };
            let res =
                kalman_filter(&model, &data, &ObsNoiseSpec::new(0.1).unwrap(), &FilterOptions { mode, ..Default::default() })
                    .unwrap();
            let sm = rts_smoother(&model, &res).unwrap();
            for k in 0..8 {
                let (ts, tf) = (sm.trace(k), res.filtered.trace(k));
                assert!(ts <= tf * (1.0 + 1e-9) + 1e-12, "seed {seed} step {k}: {ts} > {tf}");
            }
        }
    }

    #[test]
    fn single_step_smoother_is_filter() {
        let p = PhysicalParams::isotropic([1.0, 0.0], 0.02, 0.1, 0.01, 1.0).unwrap();
        let model = model_4x4(&p, 0.1);
        let res = kalman_filter(&model, &random_cube(1, 1, 0.1), &ObsNoiseSpec::new(0.1).unwrap(), &FilterOptions::default())
            .unwrap();
        let sm = rts_smoother(&model, &res).unwrap();
        assert_eq!(sm.mean(0), res.filtered.mean(0));
        assert_eq!(sm.covariance(0), res.filtered.covariance(0));
    }

    #[test]
    fn input_checks() {
        let p = PhysicalParams::isotropic([1.0, 0.0], 0.02, 0.1, 0.01, 1.0).unwrap();
        let model = model_4x4(&p, 0.1);
        let noise = ObsNoiseSpec::new(0.1).unwrap();
        assert!(kalman_filter(&model, &random_cube(3, 1, 0.2), &noise, &FilterOptions::default()).is_err());
        assert!(ObsNoiseSpec::new(0.0).is_err());
        let g = make_grid(2, 2, 1.0).unwrap();
        let small = SpaceTimeCube::new(g, 0.1, 0.0, vec![vec![0.0; 4]]).unwrap();
        assert!(matches!(kalman_filter(&model, &small, &noise, &FilterOptions::default()), Err(StgpError::Dimension(_))));
    }

    #[test]
    fn reconstruction_cases() {
        let p = PhysicalParams::isotropic([1.0, 0.0], 0.02, 0.1, 0.01, 1.0).unwrap();
        let model = model_4x4(&p, 0.1);
        let zero = reconstruct_fields(&model, &vec![0.0; 32]).unwrap();
        assert!(zero.value_field.iter().chain(&zero.derivative_field).all(|&v| v == 0.0));
        let mut c = vec![0.0; 32];
        let sl = model.slots(Wavenumber(0, 0)).unwrap();
        c[sl.alpha_r] = 2.5;
        c[sl.beta_r] = -1.0;
        let f = reconstruct_fields(&model, &c).unwrap();
        assert!(f.value_field.iter().all(|v| (v - 2.5).abs() < 1e-14));
        assert!(f.derivative_field.iter().all(|v| (v + 1.0).abs() < 1e-14));
        assert!(reconstruct_fields(&model, &[0.0; 5]).is_err());
    }

    #[test]
    fn projection_round_trip_through_state() {
        let p = PhysicalParams::isotropic([1.0, 0.0], 0.02, 0.1, 0.01, 1.0).unwrap();
        let model = model_4x4(&p, 0.1);
        let field = random_cube(1, 4, 0.1).frames.remove(0);
        let coeffs = model.basis.project(&field);
        let mut state = vec![0.0; 32];
        for b in &model.blocks {
            for &(local, col) in &b.observed {
                state[b.offset + local] = coeffs[col];
            }
        }
        let back = reconstruct_fields(&model, &state).unwrap().value_field;
        let err = back.iter().zip(&field).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn amplitudes() {
        let p = PhysicalParams::isotropic([1.0, 0.0], 0.02, 0.1, 0.01, 1.0).unwrap();
        let model = model_4x4(&p, 0.1);
        let mut res =
            kalman_filter(&model, &random_cube(2, 2, 0.1), &ObsNoiseSpec::new(0.1).unwrap(), &FilterOptions::default())
                .unwrap();
        let k = Wavenumber(1, 0);
        let sl = model.slots(k).unwrap();
        let set = |res: &mut FilterResult, idx: usize, v: f64| {
            for part in &mut res.filtered.parts {
                let len = part.means[0].len();
                if idx >= part.offset && idx < part.offset + len {
                    part.means[1][idx - part.offset] = v;
                }
            }
        };
        set(&mut res, sl.alpha_r, 3.0);
        set(&mut res, sl.alpha_i.unwrap(), 4.0);
        assert!((modal_amplitude(&res.filtered, k, Coefficient::Alpha).unwrap()[1] - 5.0).abs() < 1e-15);
        set(&mut res, sl.alpha_r, -3.0);
        set(&mut res, sl.alpha_i.unwrap(), -4.0);
        assert!((modal_amplitude(&res.filtered, k, Coefficient::Alpha).unwrap()[1] - 5.0).abs() < 1e-15);
        let dc = Wavenumber(0, 0);
        let sl0 = model.slots(dc).unwrap();
        set(&mut res, sl0.beta_r, -0.7);
        assert_eq!(modal_amplitude(&res.filtered, dc, Coefficient::Beta).unwrap()[1], 0.7);
        assert!(modal_amplitude(&res.filtered, Wavenumber(9, 9), Coefficient::Beta).is_err());
    }
}

//! Synthetic data: Gaussian random fields, the source-driven stochastic
//! advection-diffusion equation on the periodic unit square, and direct
//! simulation of assembled state-space models.
//!
//! The PDE is stepped with a spectral integrating factor. Each DFT mode is
//! multiplied by `e^{-λh}` per sub-interval `h`, and the piecewise-constant
//! source enters through the exact factor `(1 - e^{-λh})/λ`. The scheme is
//! unconditionally stable on the torus.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dynamics::StateSpaceModel;
use crate::error::{Result, StgpError};
use crate::params::{GridSpec, PhysicalParams, SpaceTimeCube};
use crate::statespace::PriorSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceSpec {
    pub center: [f64; 2],
    /// Per-axis variance of the Gaussian bump.
    pub shape_diag: [f64; 2],
    /// Peak value before the change.
    pub amplitude: f64,
    /// Peak value from the change time on, for flagged sources.
    pub post_change_amplitude: f64,
    pub flagged: bool,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self { center: [0.5, 0.5], shape_diag: [1e-3, 1e-3], amplitude: 10.0, post_change_amplitude: 5.0, flagged: false }
    }
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.shape_diag.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(StgpError::Param("source shape_diag must be > 0".into()));
        }
        if !(self.amplitude >= 0.0 && self.post_change_amplitude >= 0.0) {
            return Err(StgpError::Param("source amplitudes must be >= 0".into()));
        }
        Ok(())
    }

    fn peak_at(&self, t: f64, change_time: f64) -> f64 {
        if self.flagged && t >= change_time {
            self.post_change_amplitude
        } else {
            self.amplitude
        }
    }
}

/// Ten sources on two interleaved rings of five, radius 0.2 around the
/// domain center, at angles `36°·j`. The sources at `(0.7, 0.5)` and
/// `(0.3, 0.5)` are flagged.
pub fn default_sources() -> Vec<SourceSpec> {
    (0..10)
        .map(|j| {
            let th = (36.0 * j as f64).to_radians();
            SourceSpec {
                center: [0.5 + 0.2 * th.cos(), 0.5 + 0.2 * th.sin()],
                flagged: j == 0 || j == 5,
                ..SourceSpec::default()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitCovSpec {
    pub sill: f64,
    pub range: f64,
}

impl Default for InitCovSpec {
    fn default() -> Self {
        Self { sill: 1.0, range: 0.25 }
    }
}

/// Forcing noise `ε`: iid per cell, or exponentially correlated when
/// `range` is set. `variance` is accumulated over one frame interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForcingNoiseSpec {
    pub variance: f64,
    pub range: Option<f64>,
}

impl Default for ForcingNoiseSpec {
    fn default() -> Self {
        Self { variance: 0.01, range: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub n1: usize,
    pub n2: usize,
    pub extent: [f64; 2],
    pub params: PhysicalParams,
    pub sources: Vec<SourceSpec>,
    pub change_time: f64,
    pub t_end: f64,
    pub frame_dt: f64,
    pub substeps: usize,
    pub init_cov: InitCovSpec,
    pub forcing: ForcingNoiseSpec,
    /// Extra iid measurement noise added to stored frames only.
    pub obs_noise_variance: f64,
    /// Use `½∇·Σ∇` instead of `∇·Σ∇` for diffusion.
    pub half_diffusion: bool,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n1: 40,
            n2: 40,
            extent: [1.0, 1.0],
            params: PhysicalParams {
                mu: vec![1.0, 0.0],
                sigma_diag: vec![0.02, 0.02],
                eta: 0.1,
                noise_shape_diag: vec![0.01, 0.01],
                noise_scale: 1.0,
            },
            sources: default_sources(),
            change_time: 2.0,
            t_end: 3.3,
            frame_dt: 0.1,
            substeps: 8,
            init_cov: InitCovSpec::default(),
            forcing: ForcingNoiseSpec::default(),
            obs_noise_variance: 0.0,
            half_diffusion: false,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        self.params.require_2d()?;
        GridSpec::new(self.n1, self.n2, self.extent)?;
        for s in &self.sources {
            s.validate()?;
        }
        if !(self.frame_dt.is_finite() && self.frame_dt > 0.0) {
            return Err(StgpError::Param("frame_dt must be > 0".into()));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.frame_dt) {
            return Err(StgpError::Param("t_end must cover at least one frame".into()));
        }
        if !(self.change_time >= 0.0 && self.change_time <= self.t_end) {
            return Err(StgpError::Param(format!("change_time must lie in [0, {}]", self.t_end)));
        }
        if self.substeps == 0 {
            return Err(StgpError::Param("substeps must be >= 1".into()));
        }
        if !(self.init_cov.sill >= 0.0 && self.init_cov.range > 0.0) {
            return Err(StgpError::Param("initial covariance needs sill >= 0 and range > 0".into()));
        }
        if !(self.forcing.variance >= 0.0) || self.forcing.range.is_some_and(|r| !(r > 0.0)) {
            return Err(StgpError::Param("forcing noise needs variance >= 0 and range > 0".into()));
        }
        if !(self.obs_noise_variance >= 0.0) {
            return Err(StgpError::Param("obs_noise_variance must be >= 0".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.n1, self.n2, self.extent)
    }

    /// Number of frame intervals, `round(t_end / frame_dt)`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.frame_dt).round() as usize
    }

    /// Frame index at which the change time falls.
    pub fn change_frame(&self) -> usize {
        (self.change_time / self.frame_dt).round() as usize
    }
}

/// Simulated cube with the change point it contains.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub cube: SpaceTimeCube,
    pub change_time: f64,
    pub change_frame: usize,
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Lower-triangular factor with jitter retries; `None` if all fail.
fn cholesky_jittered(c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale = c.diagonal().amax().max(f64::MIN_POSITIVE);
    std::iter::once(0.0)
        .chain((0..6).map(|i| scale * 1e-12 * 10f64.powi(i)))
        .find_map(|j| (c + DMatrix::identity(c.nrows(), c.ncols()) * j).cholesky())
        .map(|ch| ch.unpack())
}

/// Square root `S` with `S Sᵀ = M` for a symmetric PSD matrix.
pub(crate) fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = m.clone().symmetric_eigen();
    let d = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&d)
}

/// Reusable sampler for `sill · exp(-|s - s'| / range)` on a grid.
#[derive(Debug, Clone)]
pub struct GrfSampler {
    factor: DMatrix<f64>,
}

impl GrfSampler {
    pub fn exponential(grid: &GridSpec, sill: f64, range: f64) -> Result<Self> {
        if !(sill >= 0.0 && sill.is_finite() && range > 0.0 && range.is_finite()) {
            return Err(StgpError::Param(format!("need sill >= 0 and range > 0, got {sill}, {range}")));
        }
        let loc = grid.locations();
        let n = loc.len();
        let c = DMatrix::from_fn(n, n, |i, j| {
            let d = ((loc[i][0] - loc[j][0]).powi(2) + (loc[i][1] - loc[j][1]).powi(2)).sqrt();
            sill * (-d / range).exp()
        });
        let factor = cholesky_jittered(&c)
            .ok_or_else(|| StgpError::Numerical("exponential covariance factorization failed".into()))?;
        Ok(Self { factor })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let z = normals(rng, self.factor.ncols());
        (&self.factor * z).iter().copied().collect()
    }
}

/// One zero-mean exponential-covariance field, deterministic per seed.
pub fn sample_grf_exponential(grid: &GridSpec, sill: f64, range: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(GrfSampler::exponential(grid, sill, range)?.sample(&mut rng))
}

/// Source sum at time `t`; each bump is peak-normalized to its amplitude.
pub fn source_field(grid: &GridSpec, sources: &[SourceSpec], t: f64, change_time: f64) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for src in sources {
        let peak = src.peak_at(t, change_time);
        if peak == 0.0 {
            continue;
        }
        for (v, &s) in out.iter_mut().zip(grid.locations()) {
            let h = grid.wrap(src.center, s);
            *v += peak * (-0.5 * (h[0] * h[0] / src.shape_diag[0] + h[1] * h[1] / src.shape_diag[1])).exp();
        }
    }
    out
}

/// Separable 2-D FFT on a row-major `n1 x n2` array.
struct Fft2 {
    n1: usize,
    n2: usize,
    rows: std::sync::Arc<dyn Fft<f64>>,
    cols: std::sync::Arc<dyn Fft<f64>>,
    rows_inv: std::sync::Arc<dyn Fft<f64>>,
    cols_inv: std::sync::Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(n1: usize, n2: usize) -> Self {
        let mut pl = FftPlanner::new();
        Self {
            n1,
            n2,
            rows: pl.plan_fft_forward(n2),
            cols: pl.plan_fft_forward(n1),
            rows_inv: pl.plan_fft_inverse(n2),
            cols_inv: pl.plan_fft_inverse(n1),
        }
    }

    fn apply(&self, data: &mut [Complex64], inverse: bool) {
        let (rows, cols) = if inverse { (&self.rows_inv, &self.cols_inv) } else { (&self.rows, &self.cols) };
        rows.process(data);
        let mut col = vec![Complex64::default(); self.n1];
        for j in 0..self.n2 {
            for i in 0..self.n1 {
                col[i] = data[i * self.n2 + j];
            }
            cols.process(&mut col);
            for i in 0..self.n1 {
                data[i * self.n2 + j] = col[i];
            }
        }
        if inverse {
            let s = 1.0 / (self.n1 * self.n2) as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Symbol `λ = η + c·4π²kᵀΣk + i·2πkᵀμ` per DFT index, with `c = 1` or `½`.
/// Nyquist indices carry no advection phase so real fields stay real.
fn dft_symbols(p: &PhysicalParams, n1: usize, n2: usize, extent: [f64; 2], half: bool) -> Vec<Complex64> {
    let c = if half { 0.5 } else { 1.0 };
    let label = |i: usize, n: usize| if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
    let mut out = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        for j in 0..n2 {
            let k1 = label(i, n1) / extent[0];
            let k2 = label(j, n2) / extent[1];
            let a = p.eta + c * 4.0 * PI * PI * (p.sigma_diag[0] * k1 * k1 + p.sigma_diag[1] * k2 * k2);
            let b1 = if 2 * i == n1 { 0.0 } else { k1 * p.mu[0] };
            let b2 = if 2 * j == n2 { 0.0 } else { k2 * p.mu[1] };
            out.push(Complex64::new(a, 2.0 * PI * (b1 + b2)));
        }
    }
    out
}

/// Runs the source-driven SPDE and returns `n_steps + 1` frames.
pub fn simulate_spde(spec: &ScenarioSpec) -> Result<Simulation> {
    spec.validate()?;
    let grid = spec.grid()?;
    let init = if spec.init_cov.sill > 0.0 {
        Some(GrfSampler::exponential(&grid, spec.init_cov.sill, spec.init_cov.range)?)
    } else {
        None
    };
    let forcing = match spec.forcing.range {
        Some(r) if spec.forcing.variance > 0.0 => Some(GrfSampler::exponential(&grid, spec.forcing.variance, r)?),
        _ => None,
    };
    simulate_spde_with(spec, &grid, init.as_ref(), forcing.as_ref())
}

/// Same as [`simulate_spde`] reusing prebuilt samplers (ensembles).
pub fn simulate_spde_with(
    spec: &ScenarioSpec,
    grid: &GridSpec,
    init: Option<&GrfSampler>,
    forcing: Option<&GrfSampler>,
) -> Result<Simulation> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x0 = init.map_or_else(|| vec![0.0; grid.len()], |s| s.sample(&mut rng));
    run_spde(spec, grid, x0, forcing, rng)
}

/// Runs the SPDE from a given initial field.
pub fn simulate_spde_from(
    spec: &ScenarioSpec,
    x0: Vec<f64>,
    forcing: Option<&GrfSampler>,
) -> Result<Simulation> {
    spec.validate()?;
    let grid = spec.grid()?;
    if x0.len() != grid.len() {
        return Err(StgpError::Dimension(format!("initial field has {} cells, grid has {}", x0.len(), grid.len())));
    }
    run_spde(spec, &grid, x0, forcing, ChaCha8Rng::seed_from_u64(spec.seed))
}

fn run_spde(
    spec: &ScenarioSpec,
    grid: &GridSpec,
    mut x: Vec<f64>,
    forcing: Option<&GrfSampler>,
    mut rng: ChaCha8Rng,
) -> Result<Simulation> {
    let n = grid.len();
    let fft = Fft2::new(spec.n1, spec.n2);
    let h = spec.frame_dt / spec.substeps as f64;
    let sym = dft_symbols(&spec.params, spec.n1, spec.n2, spec.extent, spec.half_diffusion);
    let decay: Vec<Complex64> = sym.iter().map(|l| (-l * h).exp()).collect();
    let src_gain: Vec<Complex64> =
        sym.iter().map(|l| if (l * h).norm() < 1e-12 { Complex64::new(h, 0.0) } else { (1.0 - (-l * h).exp()) / l }).collect();
    let sub_sd = (spec.forcing.variance / spec.substeps as f64).sqrt();
    let sub_scale = (1.0 / spec.substeps as f64).sqrt();

    let mut frames = Vec::with_capacity(spec.n_steps() + 1);
    let obs_sd = spec.obs_noise_variance.sqrt();
    let record = |x: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        if obs_sd > 0.0 {
            x.iter().map(|v| v + obs_sd * rng.sample::<f64, _>(StandardNormal)).collect()
        } else {
            x.to_vec()
        }
    };
    frames.push(record(&x, &mut rng));
    let mut buf = vec![Complex64::default(); n];
    let mut qbuf = vec![Complex64::default(); n];
    for frame in 0..spec.n_steps() {
        for sub in 0..spec.substeps {
            let t = (frame * spec.substeps + sub) as f64 * h;
            let q = source_field(grid, &spec.sources, t + 1e-9 * h, spec.change_time);
            for i in 0..n {
                buf[i] = Complex64::new(x[i], 0.0);
                qbuf[i] = Complex64::new(q[i], 0.0);
            }
            fft.apply(&mut buf, false);
            fft.apply(&mut qbuf, false);
            for i in 0..n {
                buf[i] = decay[i] * buf[i] + src_gain[i] * qbuf[i];
            }
            fft.apply(&mut buf, true);
            for i in 0..n {
                x[i] = buf[i].re;
            }
            match forcing {
                Some(s) => {
                    for (v, e) in x.iter_mut().zip(s.sample(&mut rng)) {
                        *v += sub_scale * e;
                    }
                }
                None if sub_sd > 0.0 => {
                    for v in x.iter_mut() {
                        *v += sub_sd * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                None => {}
            }
        }
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !peak.is_finite() || peak > 1e12 {
            return Err(StgpError::Unstable(format!(
                "field norm exploded at frame {}; try substeps >= {}",
                frame + 1,
                spec.substeps * 4
            )));
        }
        frames.push(record(&x, &mut rng));
    }
    let cube = SpaceTimeCube::new(grid.clone(), spec.frame_dt, 0.0, frames)?;
    Ok(Simulation { cube, change_time: spec.change_time, change_frame: spec.change_frame() })
}

/// Coefficient trajectory and observed frames drawn from a state-space model.
#[derive(Debug, Clone)]
pub struct StateSimulation {
    pub states: Vec<DVector<f64>>,
    pub cube: SpaceTimeCube,
}

/// Exact linear-Gaussian simulation of `steps` frames. The initial state is
/// drawn from `prior`; observations add iid noise of variance `obs_variance`.
pub fn simulate_statespace(
    model: &StateSpaceModel,
    steps: usize,
    seed: u64,
    obs_variance: f64,
    prior: PriorSpec,
) -> Result<StateSimulation> {
    if steps == 0 {
        return Err(StgpError::Param("need at least one step".into()));
    }
    if !(obs_variance >= 0.0) {
        return Err(StgpError::Param("observation variance must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init: Vec<DMatrix<f64>> = model
        .blocks
        .iter()
        .map(|b| {
            let p = match prior {
                PriorSpec::Stationary => b.stationary_covariance(1e-10).unwrap_or_else(|| &b.noise_cov * 10.0),
                PriorSpec::NoiseMultiple(c) => &b.noise_cov * c,
                PriorSpec::Isotropic(c) => DMatrix::identity(b.size(), b.size()) * c,
            };
            psd_sqrt(&p)
        })
        .collect();
    let mut theta = DVector::zeros(model.state_dim);
    for (b, s) in model.blocks.iter().zip(&init) {
        let z = normals(&mut rng, s.ncols());
        theta.rows_mut(b.offset, b.size()).copy_from(&(s * z));
    }
    let (n1, n2) = model.basis.dims();
    let grid = GridSpec::new(n1, n2, model.basis.extent())?;
    let h = model.obs_map();
    let obs_sd = obs_variance.sqrt();
    let mut states = Vec::with_capacity(steps);
    let mut frames = Vec::with_capacity(steps);
    for k in 0..steps {
        if k > 0 {
            let mut next = DVector::zeros(model.state_dim);
            for b in &model.blocks {
                let cur = theta.rows(b.offset, b.size());
                let z = normals(&mut rng, b.noise_factor.ncols());
                next.rows_mut(b.offset, b.size()).copy_from(&(&b.transition * cur + &b.noise_factor * z));
            }
            theta = next;
        }
        let mut y = &h * &theta;
        if obs_sd > 0.0 {
            y += normals(&mut rng, y.len()) * obs_sd;
        }
        frames.push(y.iter().copied().collect());
        states.push(theta.clone());
    }
    let cube = SpaceTimeCube::new(grid, model.dt, 0.0, frames)?;
    Ok(StateSimulation { states, cube })
}

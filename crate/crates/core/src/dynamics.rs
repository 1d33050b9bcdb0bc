//! Finite-dimensional state-space construction.
//!
//! Each wavenumber carries a value coefficient `α` and a time-derivative
//! coefficient `β`. The first-order Euler step of the second-order dynamics
//! gives the per-block transition
//!
//! ```text
//! [ 1      δ   ]
//! [ -λδ   1-δ  ]
//! ```
//!
//! and the process noise of each block is a rank-one pattern built from the
//! time moments `m₁, m₂` scaled by the block's KL weight. The complex
//! coefficient of `e^{2πi kᵀs}` corresponds to `α_R - i α_I` in the real
//! model; paired blocks are ordered `(α_R, β_R, α_I, β_I)`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;

use crate::error::{Result, StgpError};
use crate::params::{GridSpec, PhysicalParams};
use crate::spectral::{
    basis_matrix, operator_coeffs_on, BasisMatrix, KlTable, SetTag, Wavenumber, WavenumberSets,
};

/// Time moments of the Euler propagator over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseMoments {
    pub m1: f64,
    pub m12: f64,
    pub m2: f64,
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && delta > 0.0 {
        Ok(())
    } else {
        Err(StgpError::Param(format!("time step must be positive, got {delta}")))
    }
}

/// `m₁ = δ³/3`, `m₁₂ = δ²/2 + δ³/3`, `m₂ = δ + δ² + δ³/3`.
pub fn noise_moments(delta: f64) -> Result<NoiseMoments> {
    check_delta(delta)?;
    let d2 = delta * delta;
    let d3 = d2 * delta;
    Ok(NoiseMoments { m1: d3 / 3.0, m12: d2 / 2.0 + d3 / 3.0, m2: delta + d2 + d3 / 3.0 })
}

/// Exact-moment noise pattern `[m₁ m₁₂; m₁₂ m₂]`.
pub fn noise_block_exact(delta: f64) -> Result<Matrix2<f64>> {
    let m = noise_moments(delta)?;
    Ok(Matrix2::new(m.m1, m.m12, m.m12, m.m2))
}

/// Rank-one noise pattern `[m₁ √(m₁m₂); √(m₁m₂) m₂]` used by the model.
pub fn noise_block_approx(delta: f64) -> Result<Matrix2<f64>> {
    let m = noise_moments(delta)?;
    let off = (m.m1 * m.m2).sqrt();
    Ok(Matrix2::new(m.m1, off, off, m.m2))
}

/// Off-diagonal gap `√(m₁m₂) - m₁₂` between the two patterns.
pub fn approx_error(delta: f64) -> Result<f64> {
    let m = noise_moments(delta)?;
    Ok((m.m1 * m.m2).sqrt() - m.m12)
}

/// Complex Euler block `[[1, δ], [-λδ, 1-δ]]` with `λ = a + ib`.
pub fn transition_block_complex(k: Wavenumber, delta: f64, p: &PhysicalParams) -> Result<Matrix2<Complex64>> {
    check_delta(delta)?;
    let lam = operator_coeffs_on(k, p, [1.0, 1.0]).lambda;
    let one = Complex64::new(1.0, 0.0);
    Ok(Matrix2::new(one, Complex64::new(delta, 0.0), -lam * delta, Complex64::new(1.0 - delta, 0.0)))
}

/// Real Euler block for a corner (2x2) or paired (4x4) wavenumber.
pub fn transition_block_real(k: Wavenumber, tag: SetTag, delta: f64, p: &PhysicalParams) -> Result<DMatrix<f64>> {
    transition_block_real_on(k, tag, delta, p, [1.0, 1.0])
}

pub(crate) fn transition_block_real_on(
    k: Wavenumber,
    tag: SetTag,
    delta: f64,
    p: &PhysicalParams,
    extent: [f64; 2],
) -> Result<DMatrix<f64>> {
    check_delta(delta)?;
    let c = operator_coeffs_on(k, p, extent);
    let (ad, bd) = (c.a * delta, c.b * delta);
    Ok(match tag {
        SetTag::Corner => DMatrix::from_row_slice(2, 2, &[1.0, delta, -ad, 1.0 - delta]),
        SetTag::Paired => DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, delta, 0.0, 0.0, //
                -ad, 1.0 - delta, -bd, 0.0, //
                0.0, 0.0, 1.0, delta, //
                bd, 0.0, -ad, 1.0 - delta,
            ],
        ),
    })
}

/// Largest eigenvalue magnitude of a square matrix.
///
/// Uses a bounded Schur iteration and falls back to Gelfand's formula
/// `‖A^(2^j)‖^(2^-j)` if it does not converge.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if let Some(s) = nalgebra::Schur::try_new(m.clone(), 1e-14, 10_000) {
        return s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    let mut a = m.clone();
    let mut log_scale = 0.0;
    let mut exp = 1.0;
    for _ in 0..40 {
        let n = a.norm();
        if n == 0.0 || !n.is_finite() {
            break;
        }
        a /= n;
        log_scale = 2.0 * (log_scale + n.ln());
        a = &a * &a;
        exp *= 2.0;
    }
    (log_scale / exp + a.norm().ln() / exp).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Value/derivative model built from the Euler step.
    Proposed,
    /// Decay-rotation model with growth-decay states.
    Baseline,
}

/// State indices of one wavenumber's value and derivative coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModalSlots {
    pub alpha_r: usize,
    pub alpha_i: Option<usize>,
    pub beta_r: usize,
    pub beta_i: Option<usize>,
}

impl ModalSlots {
    fn shifted(&self, by: usize) -> Self {
        Self {
            alpha_r: self.alpha_r + by,
            alpha_i: self.alpha_i.map(|i| i + by),
            beta_r: self.beta_r + by,
            beta_i: self.beta_i.map(|i| i + by),
        }
    }
}

/// One wavenumber's slice of the block-diagonal system.
#[derive(Debug, Clone)]
pub struct Block {
    pub wavenumber: Wavenumber,
    pub tag: SetTag,
    /// Position of the block's first state in the full state vector.
    pub offset: usize,
    pub transition: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
    /// `noise_cov = noise_factor · noise_factorᵀ`.
    pub noise_factor: DMatrix<f64>,
    /// `(local state, basis column)` pairs seen by the observations.
    pub observed: Vec<(usize, usize)>,
    /// Local slot layout.
    pub slots: ModalSlots,
}

impl Block {
    pub fn new(
        wavenumber: Wavenumber,
        tag: SetTag,
        transition: DMatrix<f64>,
        noise_factor: DMatrix<f64>,
        observed: Vec<(usize, usize)>,
        slots: ModalSlots,
    ) -> Result<Self> {
        let size = transition.nrows();
        let expected = match tag {
            SetTag::Corner => 2,
            SetTag::Paired => 4,
        };
        if size != expected || !transition.is_square() || noise_factor.nrows() != size {
            return Err(StgpError::Dimension(format!(
                "block {wavenumber} tagged {tag:?} needs {expected}x{expected}, got {}x{} transition and {}-row noise factor",
                transition.nrows(),
                transition.ncols(),
                noise_factor.nrows()
            )));
        }
        let noise_cov = &noise_factor * noise_factor.transpose();
        Ok(Self { wavenumber, tag, offset: 0, transition, noise_cov, noise_factor, observed, slots })
    }

    pub fn size(&self) -> usize {
        self.transition.nrows()
    }

    /// Stationary covariance `P = GPGᵀ + V` by squared doubling, or `None`
    /// when the block is not a contraction or the iteration stalls.
    pub fn stationary_covariance(&self, tol: f64) -> Option<DMatrix<f64>> {
        if spectral_radius(&self.transition) >= 1.0 {
            return None;
        }
        let mut a = self.transition.clone();
        let mut p = self.noise_cov.clone();
        for _ in 0..64 {
            let inc = &a * &p * a.transpose();
            p += &inc;
            a = &a * &a;
            let scale = p.amax().max(f64::MIN_POSITIVE);
            if !p.iter().all(|v| v.is_finite()) {
                return None;
            }
            if inc.amax() <= tol * scale {
                return Some(0.5 * (&p + p.transpose()));
            }
        }
        None
    }
}

/// Block-diagonal linear-Gaussian state-space model over a Fourier basis.
#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    pub kind: ModelKind,
    pub blocks: Vec<Block>,
    pub basis: Arc<BasisMatrix>,
    pub dt: f64,
    pub state_dim: usize,
    index: HashMap<Wavenumber, usize>,
}

impl StateSpaceModel {
    pub fn from_blocks(kind: ModelKind, mut blocks: Vec<Block>, basis: Arc<BasisMatrix>, dt: f64) -> Result<Self> {
        check_delta(dt)?;
        let mut offset = 0;
        let mut index = HashMap::with_capacity(blocks.len());
        for (i, b) in blocks.iter_mut().enumerate() {
            for &(_, col) in &b.observed {
                if col >= basis.ncols() {
                    return Err(StgpError::Dimension(format!("basis column {col} out of range")));
                }
            }
            b.offset = offset;
            offset += b.size();
            if index.insert(b.wavenumber, i).is_some() {
                return Err(StgpError::Dimension(format!("duplicate block {}", b.wavenumber)));
            }
        }
        Ok(Self { kind, blocks, basis, dt, state_dim: offset, index })
    }

    pub fn n_obs(&self) -> usize {
        self.basis.nrows()
    }

    pub fn block(&self, k: Wavenumber) -> Option<&Block> {
        self.index.get(&k).map(|&i| &self.blocks[i])
    }

    pub fn wavenumbers(&self) -> impl Iterator<Item = Wavenumber> + '_ {
        self.blocks.iter().map(|b| b.wavenumber)
    }

    /// Absolute state indices of `k`'s coefficients.
    pub fn slots(&self, k: Wavenumber) -> Result<ModalSlots> {
        self.block(k)
            .map(|b| b.slots.shifted(b.offset))
            .ok_or(StgpError::UnknownWavenumber(k.0, k.1))
    }

    pub fn slot_index(&self) -> HashMap<Wavenumber, ModalSlots> {
        self.blocks.iter().map(|b| (b.wavenumber, b.slots.shifted(b.offset))).collect()
    }

    /// Basis columns not carried by any block (non-empty under a low-pass cut).
    pub fn unobserved_columns(&self) -> Vec<usize> {
        let mut used = vec![false; self.basis.ncols()];
        for b in &self.blocks {
            for &(_, c) in &b.observed {
                used[c] = true;
            }
        }
        used.iter().enumerate().filter(|(_, u)| !**u).map(|(c, _)| c).collect()
    }

    /// Observation matrix `n x state_dim`: basis columns at observed slots,
    /// zeros elsewhere.
    pub fn obs_map(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n_obs(), self.state_dim);
        for b in &self.blocks {
            for &(local, col) in &b.observed {
                h.set_column(b.offset + local, &self.basis.matrix().column(col));
            }
        }
        h
    }

    fn block_diagonal(&self, pick: impl Fn(&Block) -> &DMatrix<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.state_dim, self.state_dim);
        for b in &self.blocks {
            m.view_mut((b.offset, b.offset), (b.size(), b.size())).copy_from(pick(b));
        }
        m
    }

    pub fn transition_matrix(&self) -> DMatrix<f64> {
        self.block_diagonal(|b| &b.transition)
    }

    pub fn noise_cov_matrix(&self) -> DMatrix<f64> {
        self.block_diagonal(|b| &b.noise_cov)
    }
}

/// Assembles the value/derivative model on a grid.
///
/// Blocks follow the corner set then the paired set, each in lexicographic
/// order. With `lowpass = Some(c)` only wavenumbers with
/// `max(|k₁|, |k₂|) <= c` are kept.
pub fn assemble_model(
    grid: &GridSpec,
    sets: &WavenumberSets,
    p: &PhysicalParams,
    delta: f64,
    lowpass: Option<i64>,
) -> Result<StateSpaceModel> {
    let basis = Arc::new(basis_matrix(grid, sets)?);
    assemble_model_with_basis(basis, sets, p, delta, lowpass)
}

/// Same as [`assemble_model`] reusing a prebuilt basis.
pub fn assemble_model_with_basis(
    basis: Arc<BasisMatrix>,
    sets: &WavenumberSets,
    p: &PhysicalParams,
    delta: f64,
    lowpass: Option<i64>,
) -> Result<StateSpaceModel> {
    p.require_2d()?;
    let (n1, n2) = basis.dims();
    if (sets.n1, sets.n2) != (n1, n2) {
        return Err(StgpError::Dimension(format!(
            "wavenumber sets built for {} x {}, basis is {n1} x {n2}",
            sets.n1, sets.n2
        )));
    }
    let m = noise_moments(delta)?;
    let (s1, s2) = (m.m1.sqrt(), m.m2.sqrt());
    let kl = KlTable::new(p, n1, n2, basis.extent());
    let mut blocks = Vec::with_capacity(sets.omega1.len() + sets.omega2.len());
    for (k, tag) in sets.iter() {
        if lowpass.is_some_and(|c| k.max_abs() > c) {
            continue;
        }
        let transition = transition_block_real_on(k, tag, delta, p, basis.extent())?;
        let (zr, zi) = kl.weights(k);
        let (cr, ci) = basis.columns_of(k).ok_or(StgpError::UnknownWavenumber(k.0, k.1))?;
        let block = match tag {
            SetTag::Corner => Block::new(
                k,
                tag,
                transition,
                DMatrix::from_column_slice(2, 1, &[s1 * zr.sqrt(), s2 * zr.sqrt()]),
                vec![(0, cr)],
                ModalSlots { alpha_r: 0, alpha_i: None, beta_r: 1, beta_i: None },
            )?,
            SetTag::Paired => {
                let (r, i) = (zr.sqrt(), zi.sqrt());
                let ci = ci.ok_or(StgpError::UnknownWavenumber(k.0, k.1))?;
                Block::new(
                    k,
                    tag,
                    transition,
                    DMatrix::from_row_slice(4, 2, &[s1 * r, 0.0, s2 * r, 0.0, 0.0, s1 * i, 0.0, s2 * i]),
                    vec![(0, cr), (2, ci)],
                    ModalSlots { alpha_r: 0, alpha_i: Some(2), beta_r: 1, beta_i: Some(3) },
                )?
            }
        };
        blocks.push(block);
    }
    StateSpaceModel::from_blocks(ModelKind::Proposed, blocks, basis, delta)
}

//! Conventional comparison model with growth-decay states.
//!
//! Coefficients `α` follow the exact spectral propagator of the
//! advection-diffusion-decay operator and receive an additive growth term
//! `β`, which is AR(1):
//!
//! ```text
//! [α]     [G  I    ] [α]
//! [β]  =  [0  φ·I  ] [β] + e
//! ```
//!
//! The state is stored per wavenumber in the same `(α_R, β_R, α_I, β_I)`
//! layout as the proposed model, so the filter runs on it unchanged.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Block, ModalSlots, ModelKind, StateSpaceModel};
use crate::error::{Result, StgpError};
use crate::params::{GridSpec, PhysicalParams};
use crate::spectral::{basis_matrix, operator_coeffs_on, BasisMatrix, KlTable, SetTag, Wavenumber, WavenumberSets};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// AR(1) coefficient of the growth states; 1 gives a random walk.
    pub ar_coeff: f64,
    /// Per-coordinate innovation variance of the growth states.
    pub beta_variance: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { ar_coeff: 0.95, beta_variance: 1e-2 }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ar_coeff.is_finite() && self.ar_coeff > -1.0 && self.ar_coeff <= 1.0) {
            return Err(StgpError::Param(format!("ar_coeff must lie in (-1, 1], got {}", self.ar_coeff)));
        }
        if !(self.beta_variance.is_finite() && self.beta_variance >= 0.0) {
            return Err(StgpError::Param("beta_variance must be >= 0".into()));
        }
        Ok(())
    }
}

/// Decay-rotation propagator `e^{-aδ}·R(bδ)` on the `(R, I)` pair, or the
/// 1x1 decay `e^{-aδ}` for a corner wavenumber.
pub fn baseline_propagator(k: Wavenumber, tag: SetTag, delta: f64, p: &PhysicalParams) -> Result<DMatrix<f64>> {
    propagator_on(k, tag, delta, p, [1.0, 1.0])
}

fn propagator_on(k: Wavenumber, tag: SetTag, delta: f64, p: &PhysicalParams, extent: [f64; 2]) -> Result<DMatrix<f64>> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(StgpError::Param(format!("time step must be positive, got {delta}")));
    }
    let c = operator_coeffs_on(k, p, extent);
    let decay = (-c.a * delta).exp();
    Ok(match tag {
        SetTag::Corner => DMatrix::from_element(1, 1, decay),
        SetTag::Paired => {
            let (s, co) = (c.b * delta).sin_cos();
            DMatrix::from_row_slice(2, 2, &[decay * co, -decay * s, decay * s, decay * co])
        }
    })
}

pub fn assemble_baseline(
    grid: &GridSpec,
    sets: &WavenumberSets,
    p: &PhysicalParams,
    delta: f64,
    cfg: &BaselineConfig,
) -> Result<StateSpaceModel> {
    let basis = Arc::new(basis_matrix(grid, sets)?);
    assemble_baseline_with_basis(basis, sets, p, delta, cfg, None)
}

/// Builds the baseline model over a prebuilt basis, optionally low-passed.
pub fn assemble_baseline_with_basis(
    basis: Arc<BasisMatrix>,
    sets: &WavenumberSets,
    p: &PhysicalParams,
    delta: f64,
    cfg: &BaselineConfig,
    lowpass: Option<i64>,
) -> Result<StateSpaceModel> {
    p.require_2d()?;
    cfg.validate()?;
    let (n1, n2) = basis.dims();
    if (sets.n1, sets.n2) != (n1, n2) {
        return Err(StgpError::Dimension(format!(
            "wavenumber sets built for {} x {}, basis is {n1} x {n2}",
            sets.n1, sets.n2
        )));
    }
    let kl = KlTable::new(p, n1, n2, basis.extent());
    let phi = cfg.ar_coeff;
    let sb = cfg.beta_variance.sqrt();
    let mut blocks = Vec::new();
    for (k, tag) in sets.iter() {
        if lowpass.is_some_and(|c| k.max_abs() > c) {
            continue;
        }
        let g = propagator_on(k, tag, delta, p, basis.extent())?;
        let a = operator_coeffs_on(k, p, basis.extent()).a;
        // Exact variance of the first-order decay over one step.
        let gain = (1.0 - (-2.0 * a * delta).exp()) / (2.0 * a);
        let (zr, zi) = kl.weights(k);
        let (cr, ci) = basis.columns_of(k).ok_or(StgpError::UnknownWavenumber(k.0, k.1))?;
        let block = match tag {
            SetTag::Corner => Block::new(
                k,
                tag,
                DMatrix::from_row_slice(2, 2, &[g[(0, 0)], 1.0, 0.0, phi]),
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![(zr * gain).sqrt(), sb])),
                vec![(0, cr)],
                ModalSlots { alpha_r: 0, alpha_i: None, beta_r: 1, beta_i: None },
            )?,
            SetTag::Paired => {
                let ci = ci.ok_or(StgpError::UnknownWavenumber(k.0, k.1))?;
                #[rustfmt::skip]
                let t = DMatrix::from_row_slice(4, 4, &[
                    g[(0, 0)], 1.0, g[(0, 1)], 0.0,
                    0.0,       phi, 0.0,       0.0,
                    g[(1, 0)], 0.0, g[(1, 1)], 1.0,
                    0.0,       0.0, 0.0,       phi,
                ]);
                let f = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                    (zr * gain).sqrt(),
                    sb,
                    (zi * gain).sqrt(),
                    sb,
                ]));
                Block::new(k, tag, t, f, vec![(0, cr), (2, ci)], ModalSlots {
                    alpha_r: 0,
                    alpha_i: Some(2),
                    beta_r: 1,
                    beta_i: Some(3),
                })?
            }
        };
        blocks.push(block);
    }
    StateSpaceModel::from_blocks(ModelKind::Baseline, blocks, basis, delta)
}

/// Transition in the stacked `[α; β]` ordering, with `α` and `β` each
/// indexed by basis column.
pub fn augmented_transition(model: &StateSpaceModel) -> Result<DMatrix<f64>> {
    let j = model.basis.ncols();
    let mut out = DMatrix::zeros(2 * j, 2 * j);
    for b in &model.blocks {
        // Map each local state to its stacked index.
        let mut stacked = vec![usize::MAX; b.size()];
        for &(local, col) in &b.observed {
            stacked[local] = col;
            let beta = if local == b.slots.alpha_r { b.slots.beta_r } else { b.slots.beta_i.unwrap_or(b.slots.beta_r) };
            stacked[beta] = j + col;
        }
        if stacked.contains(&usize::MAX) {
            return Err(StgpError::Dimension(format!("block {} has unmapped states", b.wavenumber)));
        }
        for r in 0..b.size() {
            for c in 0..b.size() {
                out[(stacked[r], stacked[c])] = b.transition[(r, c)];
            }
        }
    }
    Ok(out)
}

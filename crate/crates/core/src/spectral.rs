//! Real-valued Fourier machinery on the periodic grid.
//!
//! The real basis splits the wavenumbers into the four self-conjugate corner
//! modes (`Ω₁`, one cosine column each) and a half-plane of paired modes
//! (`Ω₂`, a cosine and a sine column each, both carrying a factor 2). With
//! `|Ω₁| + 2|Ω₂| = n1·n2` the basis spans every grid function.
//!
//! Basis functions are anchored at the first cell center, i.e. they are
//! evaluated at `s - s₀` where `s₀` is the center of cell `(0, 0)`. On the
//! cell-centered grid the unanchored Nyquist cosine vanishes identically; the
//! shift removes that degeneracy and leaves every operator coefficient
//! unchanged because the dynamics are translation invariant.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StgpError};
use crate::params::{GridSpec, PhysicalParams};

/// Integer spatial wavenumber `(k1, k2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Wavenumber(pub i64, pub i64);

impl Wavenumber {
    pub fn max_abs(&self) -> i64 {
        self.0.abs().max(self.1.abs())
    }
}

impl std::fmt::Display for Wavenumber {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.0, self.1)
    }
}

/// Which wavenumber set a mode belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetTag {
    /// Self-conjugate corner mode, real coefficient only.
    Corner,
    /// Paired mode with cosine and sine coefficients.
    Paired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Part {
    Real,
    Imag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WavenumberSets {
    pub omega1: Vec<Wavenumber>,
    pub omega2: Vec<Wavenumber>,
    pub n1: usize,
    pub n2: usize,
}

pub fn build_wavenumber_sets(n1: usize, n2: usize) -> Result<WavenumberSets> {
    if n1 == 0 || n2 == 0 || !n1.is_multiple_of(2) || !n2.is_multiple_of(2) {
        return Err(StgpError::Sizing(format!(
            "wavenumber sets need even positive dimensions, got {n1} x {n2}"
        )));
    }
    let (h1, h2) = ((n1 / 2) as i64, (n2 / 2) as i64);
    let mut omega1 = vec![Wavenumber(0, 0), Wavenumber(0, h2), Wavenumber(h1, 0), Wavenumber(h1, h2)];
    omega1.sort();
    omega1.dedup();

    let mut omega2 = Vec::with_capacity(n1 * n2 / 2);
    for k1 in 0..=h1 {
        for k2 in 0..=h2 {
            omega2.push(Wavenumber(k1, k2));
        }
    }
    for k1 in 1..h1 {
        for k2 in (-h2 + 1)..=-1 {
            omega2.push(Wavenumber(k1, k2));
        }
    }
    omega2.retain(|k| !omega1.contains(k));
    omega2.sort();
    Ok(WavenumberSets { omega1, omega2, n1, n2 })
}

impl WavenumberSets {
    pub fn tag_of(&self, k: Wavenumber) -> Option<SetTag> {
        if self.omega1.contains(&k) {
            Some(SetTag::Corner)
        } else if self.omega2.binary_search(&k).is_ok() {
            Some(SetTag::Paired)
        } else {
            None
        }
    }

    /// All wavenumbers in block order: corners first, then pairs.
    pub fn iter(&self) -> impl Iterator<Item = (Wavenumber, SetTag)> + '_ {
        self.omega1
            .iter()
            .map(|&k| (k, SetTag::Corner))
            .chain(self.omega2.iter().map(|&k| (k, SetTag::Paired)))
    }
}

fn is_corner(k: Wavenumber, n1: usize, n2: usize) -> bool {
    let (h1, h2) = ((n1 / 2) as i64, (n2 / 2) as i64);
    (k.0 == 0 || k.0.abs() == h1) && (k.1 == 0 || k.1.abs() == h2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisColumn {
    pub wavenumber: Wavenumber,
    pub part: Part,
}

/// Dense `n x n` real Fourier basis evaluated on a grid.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    matrix: DMatrix<f64>,
    columns: Vec<BasisColumn>,
    norms: Vec<f64>,
    index: HashMap<Wavenumber, (usize, Option<usize>)>,
    anchor: [f64; 2],
    extent: [f64; 2],
    n1: usize,
    n2: usize,
}

/// Phase `2π kᵀ(s - s₀)` of a basis function on a rectangle of size `extent`.
pub fn basis_phase(k: Wavenumber, s: [f64; 2], anchor: [f64; 2], extent: [f64; 2]) -> f64 {
    2.0 * PI * (k.0 as f64 * (s[0] - anchor[0]) / extent[0] + k.1 as f64 * (s[1] - anchor[1]) / extent[1])
}

pub fn basis_matrix(grid: &GridSpec, sets: &WavenumberSets) -> Result<BasisMatrix> {
    if grid.n1 != sets.n1 || grid.n2 != sets.n2 {
        return Err(StgpError::Dimension(format!(
            "wavenumber sets built for {} x {}, grid is {} x {}",
            sets.n1, sets.n2, grid.n1, grid.n2
        )));
    }
    let anchor = grid.locations()[0];
    let mut columns = Vec::with_capacity(grid.len());
    let mut index = HashMap::new();
    for &k in &sets.omega1 {
        index.insert(k, (columns.len(), None));
        columns.push(BasisColumn { wavenumber: k, part: Part::Real });
    }
    for &k in &sets.omega2 {
        index.insert(k, (columns.len(), Some(columns.len() + 1)));
        columns.push(BasisColumn { wavenumber: k, part: Part::Real });
        columns.push(BasisColumn { wavenumber: k, part: Part::Imag });
    }
    let n = grid.len();
    let j = columns.len();
    let mut matrix = DMatrix::zeros(n, j);
    for (c, col) in columns.iter().enumerate() {
        let factor = if sets.omega1.contains(&col.wavenumber) { 1.0 } else { 2.0 };
        for (r, &s) in grid.locations().iter().enumerate() {
            let ph = basis_phase(col.wavenumber, s, anchor, grid.extent);
            matrix[(r, c)] = factor
                * match col.part {
                    Part::Real => ph.cos(),
                    Part::Imag => ph.sin(),
                };
        }
    }
    let norms = matrix.column_iter().map(|c| c.norm_squared()).collect();
    Ok(BasisMatrix { matrix, columns, norms, index, anchor, extent: grid.extent, n1: grid.n1, n2: grid.n2 })
}

impl BasisMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn columns(&self) -> &[BasisColumn] {
        &self.columns
    }

    /// Squared column norms, the diagonal of `BᵀB`.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Half state dimension `J`.
    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn anchor(&self) -> [f64; 2] {
        self.anchor
    }

    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    /// Column indices `(R, I)` of a wavenumber; `I` is absent for corners.
    pub fn columns_of(&self, k: Wavenumber) -> Option<(usize, Option<usize>)> {
        self.index.get(&k).copied()
    }

    /// Coefficients of a grid field. Exact on the full regular grid, where
    /// the columns are orthogonal.
    pub fn project(&self, field: &[f64]) -> Vec<f64> {
        let y = DVector::from_column_slice(field);
        let c = self.matrix.tr_mul(&y);
        c.iter().zip(&self.norms).map(|(v, n)| v / n).collect()
    }

    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let c = DVector::from_column_slice(coeffs);
        (&self.matrix * c).iter().copied().collect()
    }
}

/// Per-wavenumber coefficients of the spatial operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorCoeffs {
    /// Decay plus diffusion rate.
    pub a: f64,
    /// Advection rotation rate.
    pub b: f64,
    pub lambda: Complex64,
}

/// Coefficients on the unit square: `a = η + 2π² kᵀΣk`, `b = 2π kᵀμ`.
pub fn operator_coeffs(k: Wavenumber, p: &PhysicalParams) -> OperatorCoeffs {
    operator_coeffs_on(k, p, [1.0, 1.0])
}

/// Same as [`operator_coeffs`] for a rectangle of size `extent`.
pub fn operator_coeffs_on(k: Wavenumber, p: &PhysicalParams, extent: [f64; 2]) -> OperatorCoeffs {
    let omega = [2.0 * PI * k.0 as f64 / extent[0], 2.0 * PI * k.1 as f64 / extent[1]];
    let d = p.dim().min(2);
    let mut a = p.eta;
    let mut b = 0.0;
    for i in 0..d {
        a += 0.5 * p.sigma_diag[i] * omega[i] * omega[i];
        b += p.mu[i] * omega[i];
    }
    OperatorCoeffs { a, b, lambda: Complex64::new(a, b) }
}

/// Grid-periodized Gaussian noise covariance, one axis at a time.
///
/// With diagonal `Φ` the periodized `Q` factorizes, so its grid Fourier
/// coefficients are products of one-dimensional sums.
#[derive(Debug, Clone)]
pub(crate) struct KlTable {
    axis: [Vec<f64>; 2],
    n: [usize; 2],
    scale: f64,
}

pub(crate) fn periodized_gaussian_1d(h: f64, phi: f64, period: f64) -> f64 {
    let reach = (12.0 * phi.sqrt() / period).ceil() as i64 + 1;
    let norm = (2.0 * PI * phi).sqrt();
    (-reach..=reach)
        .map(|m| {
            let x = h + m as f64 * period;
            (-0.5 * x * x / phi).exp()
        })
        .sum::<f64>()
        / norm
}

impl KlTable {
    pub(crate) fn new(p: &PhysicalParams, n1: usize, n2: usize, extent: [f64; 2]) -> Self {
        let n = [n1, n2];
        let axis = [0, 1].map(|ax| {
            let len = n[ax];
            let samples: Vec<f64> = (0..len)
                .map(|m| periodized_gaussian_1d(m as f64 * extent[ax] / len as f64, p.noise_shape_diag[ax], extent[ax]))
                .collect();
            (0..len)
                .map(|k| {
                    samples
                        .iter()
                        .enumerate()
                        .map(|(m, g)| g * (2.0 * PI * (k * m % len) as f64 / len as f64).cos())
                        .sum::<f64>()
                })
                .collect()
        });
        Self { axis, n, scale: p.noise_scale }
    }

    /// Eigenvalue of the circulant noise covariance at wavenumber `k`.
    fn eigenvalue(&self, k: Wavenumber) -> f64 {
        let i1 = k.0.rem_euclid(self.n[0] as i64) as usize;
        let i2 = k.1.rem_euclid(self.n[1] as i64) as usize;
        self.scale * self.axis[0][i1] * self.axis[1][i2]
    }

    pub(crate) fn weights(&self, k: Wavenumber) -> (f64, f64) {
        let total = (self.n[0] * self.n[1]) as f64;
        let lam = self.eigenvalue(k).max(0.0);
        if is_corner(k, self.n[0], self.n[1]) {
            (lam / total, 0.0)
        } else {
            (lam / (2.0 * total), lam / (2.0 * total))
        }
    }
}

/// Variance weights `(ζ_R, ζ_I)` of the independent amplitudes attached to
/// the cosine and sine basis functions at `k`.
///
/// The weights are the real Fourier coefficients of `noise_scale · Q`
/// periodized over the torus, so that summing weight times basis outer
/// products reproduces `noise_scale · Q(h)` between every pair of cells.
/// Corners carry the full coefficient on `ζ_R`; paired modes split it
/// evenly, which absorbs the factor 2 of their basis columns.
pub fn kl_variance(k: Wavenumber, p: &PhysicalParams, grid: &GridSpec) -> (f64, f64) {
    KlTable::new(p, grid.n1, grid.n2, grid.extent).weights(k)
}

//! Domain records shared by every other module: physical parameters, the
//! regular spatial grid and the space-time data cube.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StgpError};

/// Model parameters of the advection-diffusion-decay process.
///
/// `sigma_diag` and `noise_shape_diag` hold the diagonals of the diffusion
/// matrix and of the Brownian-motion spatial covariance shape. `noise_scale`
/// multiplies the process-noise covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub mu: Vec<f64>,
    pub sigma_diag: Vec<f64>,
    pub eta: f64,
    pub noise_shape_diag: Vec<f64>,
    #[serde(default = "one")]
    pub noise_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl PhysicalParams {
    pub fn new(
        mu: Vec<f64>,
        sigma_diag: Vec<f64>,
        eta: f64,
        noise_shape_diag: Vec<f64>,
        noise_scale: f64,
    ) -> Result<Self> {
        let p = Self { mu, sigma_diag, eta, noise_shape_diag, noise_scale };
        p.validate()?;
        Ok(p)
    }

    /// Isotropic two-dimensional parameters.
    pub fn isotropic(mu: [f64; 2], sigma: f64, eta: f64, phi: f64, noise_scale: f64) -> Result<Self> {
        Self::new(mu.to_vec(), vec![sigma; 2], eta, vec![phi; 2], noise_scale)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.mu.len();
        if d != 1 && d != 2 {
            return Err(StgpError::Param(format!("spatial dimension must be 1 or 2, got {d}")));
        }
        if self.sigma_diag.len() != d || self.noise_shape_diag.len() != d {
            return Err(StgpError::Param(format!(
                "sigma_diag ({}) and noise_shape_diag ({}) must have length {d}",
                self.sigma_diag.len(),
                self.noise_shape_diag.len()
            )));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return Err(StgpError::Param("mu must be finite".into()));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !self.sigma_diag.iter().all(|&s| positive(s)) {
            return Err(StgpError::Param("sigma_diag entries must be > 0".into()));
        }
        if !self.noise_shape_diag.iter().all(|&s| positive(s)) {
            return Err(StgpError::Param("noise_shape_diag entries must be > 0".into()));
        }
        if !positive(self.eta) {
            return Err(StgpError::Param("eta must be > 0".into()));
        }
        if !positive(self.noise_scale) {
            return Err(StgpError::Param("noise_scale must be > 0".into()));
        }
        Ok(())
    }

    pub(crate) fn require_2d(&self) -> Result<()> {
        self.validate()?;
        if self.dim() != 2 {
            return Err(StgpError::Param("grid models need two-dimensional parameters".into()));
        }
        Ok(())
    }
}

/// A regular `n1 x n2` grid of cell centers on a periodic rectangle.
///
/// Cells are ordered row-major with the second index fastest, so cell
/// `(i, j)` lives at `i * n2 + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub n1: usize,
    pub n2: usize,
    pub extent: [f64; 2],
    locations: Vec<[f64; 2]>,
}

/// Builds a square-extent grid. Both dimensions must be even.
pub fn make_grid(n1: usize, n2: usize, extent: f64) -> Result<GridSpec> {
    GridSpec::new(n1, n2, [extent, extent])
}

impl GridSpec {
    pub fn new(n1: usize, n2: usize, extent: [f64; 2]) -> Result<Self> {
        if n1 == 0 || n2 == 0 || !n1.is_multiple_of(2) || !n2.is_multiple_of(2) {
            return Err(StgpError::Sizing(format!(
                "grid dimensions must be even and positive, got {n1} x {n2}"
            )));
        }
        if !extent.iter().all(|e| e.is_finite() && *e > 0.0) {
            return Err(StgpError::Sizing(format!("extent must be positive, got {extent:?}")));
        }
        let mut locations = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                locations.push([
                    (i as f64 + 0.5) / n1 as f64 * extent[0],
                    (j as f64 + 0.5) / n2 as f64 * extent[1],
                ]);
            }
        }
        Ok(Self { n1, n2, extent, locations })
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn locations(&self) -> &[[f64; 2]] {
        &self.locations
    }

    pub fn spacing(&self) -> [f64; 2] {
        [self.extent[0] / self.n1 as f64, self.extent[1] / self.n2 as f64]
    }

    pub fn flatten(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    pub fn unflatten(&self, idx: usize) -> (usize, usize) {
        (idx / self.n2, idx % self.n2)
    }

    /// Shortest periodic displacement from `a` to `b`, per axis.
    pub fn wrap(&self, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        let mut h = [b[0] - a[0], b[1] - a[1]];
        for (hx, l) in h.iter_mut().zip(self.extent) {
            *hx -= l * (*hx / l).round();
        }
        h
    }
}

/// Frames of a scalar field on a regular grid, spaced `dt` apart from `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeCube {
    pub grid: GridSpec,
    pub dt: f64,
    pub t0: f64,
    pub frames: Vec<Vec<f64>>,
}

impl SpaceTimeCube {
    pub fn new(grid: GridSpec, dt: f64, t0: f64, frames: Vec<Vec<f64>>) -> Result<Self> {
        let cube = Self { grid, dt, t0, frames };
        cube.validate()?;
        Ok(cube)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(StgpError::Param(format!("frame spacing must be positive, got {}", self.dt)));
        }
        if !self.t0.is_finite() {
            return Err(StgpError::Param("start time must be finite".into()));
        }
        let n = self.grid.len();
        for (k, f) in self.frames.iter().enumerate() {
            if f.len() != n {
                return Err(StgpError::Dimension(format!(
                    "frame {k} has {} values, grid has {n} cells",
                    f.len()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(StgpError::Format(format!("frame {k} contains non-finite values")));
            }
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Copy with every frame's spatial mean removed.
    pub fn demeaned(&self) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|f| {
                let m = f.iter().sum::<f64>() / f.len() as f64;
                f.iter().map(|v| v - m).collect()
            })
            .collect();
        Self { frames, ..self.clone() }
    }

    /// Copy with a constant added to every value.
    pub fn shifted(&self, c: f64) -> Self {
        let frames = self.frames.iter().map(|f| f.iter().map(|v| v + c).collect()).collect();
        Self { frames, ..self.clone() }
    }
}

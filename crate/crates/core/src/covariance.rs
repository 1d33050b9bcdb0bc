//! Closed-form kernel, transfer function and spectra of the
//! convolution-generated process, plus its stationary space-time covariance.
//!
//! Frequencies are angular: `u` in radians per domain unit, `v` in radians
//! per time unit. All functions accept one- or two-dimensional inputs and
//! use the first `p.dim()` entries of `u`, `s` and `h`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Result, StgpError};
use crate::params::PhysicalParams;

/// A point `(u, v)` of the space-time frequency domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumQuery {
    pub u: Vec<f64>,
    pub v: f64,
}

impl SpectrumQuery {
    pub fn new(u: Vec<f64>, v: f64) -> Self {
        Self { u, v }
    }

    pub fn negated(&self) -> Self {
        Self { u: self.u.iter().map(|x| -x).collect(), v: -self.v }
    }

    pub fn transfer(&self, p: &PhysicalParams) -> Complex64 {
        transfer_f(&self.u, self.v, p)
    }

    pub fn power(&self, p: &PhysicalParams) -> f64 {
        power_spectrum_cy(&self.u, self.v, p)
    }
}

fn quad_form(x: &[f64], diag: &[f64]) -> f64 {
    x.iter().zip(diag).map(|(a, d)| a * a * d).sum()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Space-time convolution kernel `e^{-ηt} g(s; tμ, tΣ)` for `t > 0`.
///
/// Returns 0 for `t <= 0`; at `t = 0` the kernel is a point mass and the
/// value is taken as 0.
pub fn kernel_f(s: &[f64], t: f64, p: &PhysicalParams) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let d = p.dim();
    let mut expo = 0.0;
    let mut det = 1.0;
    for i in 0..d {
        let var = t * p.sigma_diag[i];
        let r = s[i] - t * p.mu[i];
        expo += r * r / var;
        det *= var;
    }
    (-p.eta * t).exp() * (-0.5 * expo).exp() / ((2.0 * PI).powf(d as f64 / 2.0) * det.sqrt())
}

/// Fourier transform of the kernel, `1 / (η + uᵀΣu/2 + i uᵀμ + i v)`.
pub fn transfer_f(u: &[f64], v: f64, p: &PhysicalParams) -> Complex64 {
    let re = p.eta + 0.5 * quad_form(&u[..p.dim()], &p.sigma_diag);
    let im = dot(&u[..p.dim()], &p.mu) + v;
    Complex64::new(re, im).inv()
}

/// `G(u, v) = F(u, v) exp(-uᵀΦu/4)`, the causal spectral factor of `C_Y`.
pub fn spectral_factor_g(u: &[f64], v: f64, p: &PhysicalParams) -> Complex64 {
    transfer_f(u, v, p) * (-0.25 * quad_form(&u[..p.dim()], &p.noise_shape_diag)).exp()
}

/// Spectrum of the driving Brownian motion, `exp(-uᵀΦu/2)`.
pub fn noise_spectrum_cb(u: &[f64], p: &PhysicalParams) -> f64 {
    (-0.5 * quad_form(&u[..p.dim()], &p.noise_shape_diag)).exp()
}

/// Spatial covariance of the driving noise: a Gaussian density with
/// covariance `Φ`, evaluated at lag `h`.
pub fn noise_cov_q(h: &[f64], p: &PhysicalParams) -> f64 {
    let d = p.dim();
    let det: f64 = p.noise_shape_diag.iter().product();
    let q: f64 = h[..d].iter().zip(&p.noise_shape_diag).map(|(x, phi)| x * x / phi).sum();
    (-0.5 * q).exp() / ((2.0 * PI).powf(d as f64 / 2.0) * det.sqrt())
}

/// Power spectrum `C_Y(u, v) = |F(u, v)|² C_B(u)`.
pub fn power_spectrum_cy(u: &[f64], v: f64, p: &PhysicalParams) -> f64 {
    let u = &u[..p.dim()];
    let a = p.eta + 0.5 * quad_form(u, &p.sigma_diag);
    let w = v + dot(u, &p.mu);
    noise_spectrum_cb(u, p) / (a * a + w * w)
}

/// Tensor-grid trapezoid settings for the inverse transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Half-width of the box in each spatial-frequency axis.
    pub cutoff: f64,
    /// Nodes per axis, endpoints included.
    pub points: usize,
    /// Largest boundary integrand allowed, relative to the peak.
    pub boundary_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { cutoff: 16.0 * PI, points: 257, boundary_tol: 1e-8 }
    }
}

impl QuadratureConfig {
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let n = self.points.max(2);
        let h = 2.0 * self.cutoff / (n - 1) as f64;
        (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
                (-self.cutoff + i as f64 * h, w)
            })
            .collect()
    }
}

/// Stationary covariance `c_Y(h, k) = cov(Y(t, s), Y(t + k, s + h))`.
///
/// The temporal frequency is integrated in closed form,
/// `∫ dv/2π e^{ivk} / (A² + (v + B)²) = e^{-A|k|} e^{-iBk} / (2A)`,
/// and the spatial frequencies by the trapezoid rule over the box of
/// `quad`. Fails when the integrand at the box boundary exceeds
/// `quad.boundary_tol` times its peak.
pub fn stationary_cov_cy(h: &[f64], lag: f64, p: &PhysicalParams, quad: &QuadratureConfig) -> Result<f64> {
    let d = p.dim();
    let nodes = quad.nodes();
    let peak = 1.0 / (2.0 * p.eta);
    let integrand = |u: &[f64]| -> (f64, f64) {
        let a = p.eta + 0.5 * quad_form(u, &p.sigma_diag);
        let mag = noise_spectrum_cb(u, p) * (-a * lag.abs()).exp() / (2.0 * a);
        let phase = dot(u, &h[..d]) - dot(u, &p.mu) * lag;
        (mag, phase)
    };
    let mut boundary: f64 = 0.0;
    let mut total = 0.0;
    match d {
        1 => {
            for (i, &(u, w)) in nodes.iter().enumerate() {
                let (m, ph) = integrand(&[u]);
                if i == 0 || i == nodes.len() - 1 {
                    boundary = boundary.max(m);
                }
                total += w * m * ph.cos();
            }
            total /= 2.0 * PI;
        }
        _ => {
            let last = nodes.len() - 1;
            for (i, &(u1, w1)) in nodes.iter().enumerate() {
                for (j, &(u2, w2)) in nodes.iter().enumerate() {
                    let (m, ph) = integrand(&[u1, u2]);
                    if i == 0 || j == 0 || i == last || j == last {
                        boundary = boundary.max(m);
                    }
                    total += w1 * w2 * m * ph.cos();
                }
            }
            total /= 4.0 * PI * PI;
        }
    }
    if boundary > quad.boundary_tol * peak {
        return Err(StgpError::Quadrature(format!(
            "integrand at cutoff {} is {:.3e} of its peak (limit {:.1e})",
            quad.cutoff,
            boundary / peak,
            quad.boundary_tol
        )));
    }
    Ok(total)
}

//! Spatio-temporal Gaussian process models driven by an
//! advection-diffusion-decay equation, with a spectral state-space
//! representation, Kalman filtering, parameter estimation, a source-driven
//! simulator and change detection.

pub mod baseline;
pub mod covariance;
pub mod detection;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod io;
pub mod params;
pub mod pipeline;
pub mod simulator;
mod par;
pub mod spectral;
pub mod statespace;

pub use error::{Result, StgpError};
pub use params::{make_grid, GridSpec, PhysicalParams, SpaceTimeCube};
pub use spectral::{build_wavenumber_sets, SetTag, Wavenumber, WavenumberSets};

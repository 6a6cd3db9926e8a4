//! Water waves with surface tension over variable bottom, reduced to the
//! Dirichlet-Neumann operator on the flattened strip.

pub mod elliptic;
pub mod calculus;
pub mod dno;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod linearized;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid = spectral::TorusGrid<f64>;
pub type Field = spectral::ScalarField<f64>;
pub type Spectrum = spectral::SpectralField<f64>;

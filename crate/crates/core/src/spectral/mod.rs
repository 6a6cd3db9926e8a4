//! Periodic spectral substrate: grids, fields, multipliers and symbols.

mod field;
mod grid;
mod symbol;

pub use field::{
    dealias, divergence, forward_transform, fourier_multiplier, gradient, inverse_transform, laplacian, partial,
    sobolev_norm, strip_nyquist, ScalarField, SpectralField,
};
pub use grid::TorusGrid;
pub use symbol::{quantize, MultiIndex, Quantized, Symbol, SymbolFn};

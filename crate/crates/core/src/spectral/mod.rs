//! Torus grids, Fourier transforms and multiplier operators.

mod field;
mod grid;

pub use field::{pointwise_norm, SpectralField};
pub use grid::{make_grid, signed_index, TorusGrid};
pub use rustfft::num_complex::Complex64;

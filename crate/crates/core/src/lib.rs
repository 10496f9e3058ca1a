//! Simulation and verification tools for the Mullins–Sekerka flow of graphs
//! over a flat torus.

pub mod error;
pub mod fit;
pub mod inequality;
pub mod functionals;
pub mod linear;
pub mod quadrature;
pub mod runner;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};

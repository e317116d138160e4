//! Radial solvers and diagnostics for bi-harmonic (and 2D Laplacian)
//! semilinear equations with critical exponential growth.

mod banded;
pub mod diagnostics;
pub mod error;
pub mod expr;
pub mod functionals;
pub mod grid;
mod hankel;
pub mod model;
pub mod moser;
pub mod rearrangement;
pub mod solvers;

pub use error::{Error, Result};
pub use grid::{build_grid, Dimension, HNorms, RadialField, RadialGrid};

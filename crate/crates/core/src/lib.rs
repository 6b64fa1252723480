//! Numerical laboratory for obstacle problems governed by the A-Laplacian
//! `div(a(|∇u|) ∇u / |∇u|)` over general N-functions.

pub mod discretization;
pub mod error;
pub mod freeboundary;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod nfunction;
pub mod solver;
pub mod verify;

pub use discretization::ObstacleProblem;
pub use error::{Error, Result};
pub use grid::{Grid2D, ScalarField, VectorField};
pub use nfunction::{NFunction, NFunctionSpec};

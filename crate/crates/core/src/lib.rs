//! Reconstruction of piecewise-constant acoustic scatterers from noisy
//! multi-frequency boundary measurements of the scattered field.
//!
//! The pipeline couples a P1 finite-element Helmholtz solver on a disk with a
//! truncated Dirichlet-to-Neumann boundary condition, a level-set shape
//! parameterization, a Whittle-Matern Gaussian prior sampled through a
//! Karhunen-Loeve expansion of the Neumann Laplacian, and a preconditioned
//! Crank-Nicolson Markov chain over the expansion coefficients.

pub mod error;
pub mod fem;
pub mod forward;
pub mod inference;
pub mod levelset;
pub mod mesh;
pub mod observation;
pub mod prior;
pub mod shapes;
pub mod special;

pub use error::{Error, Result};

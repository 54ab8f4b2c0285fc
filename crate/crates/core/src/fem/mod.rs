//! Finite-element machinery for the truncated Helmholtz problem: sparse real
//! assembly (stiffness, weighted mass), the dense-in-band Dirichlet-to-Neumann
//! boundary block, and a direct banded solver for the resulting complex
//! symmetric systems.

mod assemble;
mod dtn;
mod solver;
mod sparse;

pub use assemble::{assemble_stiffness, assemble_weighted_mass};
pub use dtn::{assemble_dtn, default_n_trunc, DtnBlock};
pub use solver::{assemble_system, FactoredSystem, HelmholtzSystem};
pub use sparse::SparseSymMatrix;

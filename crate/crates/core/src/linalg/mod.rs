//! Sparse solvers: envelope Cholesky, preconditioned CG and grid multigrid.

pub mod grid;
pub mod sparse;

pub use grid::{GridOperator, Multigrid};
pub use sparse::{dot, norm, pcg, reverse_cuthill_mckee, CsrMatrix, EnvelopeCholesky};

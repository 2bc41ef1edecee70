//! N-dimensional discrete vector calculus on uniform grids: curl as an
//! antisymmetric-matrix field and scurl as its adjoint, free-space Newton
//! potentials, a constructive divergence-free vector-potential pipeline,
//! zero-trace Helmholtz-type decomposition, and boundary trace compatibility
//! tensors with an accept/reject checker.

pub mod error;
pub mod grid_fields;

pub mod diff_ops;
pub mod oracle;
pub mod synth;

mod spectral;

pub mod decomposition;
pub mod newton_potential;
pub mod trace;
pub mod vector_potential;

pub use error::{Result, VecpotError};

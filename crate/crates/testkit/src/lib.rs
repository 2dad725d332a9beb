//! Slow, independent reference implementations for checking `dynot-core`.
//!
//! Nothing here calls into the production operators: stencils are written out
//! again on flat vectors, projections go through a dense pseudo-inverse and
//! the prox is found by direct search. Only the field containers and grid
//! shapes are shared.

pub mod dense;
pub mod distance;
pub mod instances;
pub mod prox;

pub use dense::{dense_norm, oracle_dense_op, oracle_project, DenseOp, OracleError, MAX_DENSE_UNKNOWNS};
pub use distance::oracle_boundary_distance;
pub use prox::{oracle_prox, prox_objective};

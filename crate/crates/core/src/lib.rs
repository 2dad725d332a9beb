//! Dynamic optimal transport between discrete densities.
//!
//! The Benamou–Brenier problem is discretized on a staggered space-time grid
//! (momentum staggered in space, density staggered in time) and solved with
//! proximal splitting: four Douglas–Rachford splittings, a primal-dual scheme
//! and a centered-grid Douglas–Rachford scheme with its dual ADMM twin.
//!
//! ```
//! use dynot_core::{grid::GridDims, prox::CostModel, solvers::{solve, Algorithm, Problem, SolverConfig}};
//! use ndarray::Array2;
//!
//! let dims = GridDims::new_1d(8, 8).unwrap();
//! let f = Array2::from_elem((9, 1), 1.0 / 9.0);
//! let problem = Problem::new(dims, &f, &f, CostModel::quadratic()).unwrap();
//! let mut config = SolverConfig::new(Algorithm::ADr);
//! config.max_iter = 20;
//! let out = solve(&problem, &config).unwrap();
//! assert!(out.centered.f().iter().all(|&v| (v - 1.0 / 9.0).abs() < 1e-12));
//! ```

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod operators;
mod par;
pub mod prox;
pub mod solvers;

pub use error::{Error, Result};
pub use field::{FieldOps, FieldPair, FieldQuad};
pub use grid::{BoundaryValues, CenteredField, GridDims, SpatialGrid, StaggeredField};
pub use prox::{CostModel, PoissonBackend, ProxScratch};
pub use solvers::{solve, Algorithm, ConvergenceRecord, Problem, SolveOutput, Solver, SolverConfig};

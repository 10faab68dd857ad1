//! Numerical laboratory for weighted Hardy inequalities on Euclidean domains.
//!
//! The crate is split the same way the computations are:
//!
//! * [`geometry`]: point sets, IFS prefractals, grid domains, exact distance
//!   transforms and greedy maximal packings.
//! * [`dimension`]: finite-scale Assouad / Minkowski dimension and
//!   codimension estimators, the Aikawa exponent and content densities.
//! * [`frostman`]: hierarchical packing trees and the mass distribution that
//!   gives Hausdorff content lower bounds.
//! * [`hardy`]: the discretized Hardy quotient, its minimization, witness
//!   test functions, refinement studies and admissibility scans.
//!
//! Everything is deterministic. Parallel sections only fan out over
//! independent windows or parameter points and reduce with max/min.

pub mod dimension;
pub mod error;
pub mod frostman;
pub mod geometry;
pub mod hardy;
pub(crate) mod numeric;

pub use error::{LabError, Result};

/// Crate version, echoed in report provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

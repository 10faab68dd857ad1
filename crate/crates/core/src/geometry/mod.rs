//! Discrete sets and domains: point sets, IFS prefractals, grid domains,
//! exact distance transforms and maximal packings.

pub mod builders;
mod edt;
mod grid;
mod ifs;
mod packing;
mod pointset;

pub use edt::{distance_transform, DistanceField};
pub use grid::{GridDomain, DEFAULT_GRID_BUDGET};
pub use ifs::{generate_prefractal, IfsSpec, Similarity, DEFAULT_POINT_BUDGET};
pub use packing::{maximal_packing, maximal_packing_indices};
pub use pointset::{BBox, Ball, PointSet};

pub(crate) use edt::squared_edt;
pub(crate) use packing::greedy as greedy_packing;

pub(crate) fn lex_cmp_pub(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    pointset::lex_cmp(a, b)
}

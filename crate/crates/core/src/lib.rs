//! Exact χ² divergence between permutation mixtures and their mean-field
//! product, with the spectral, geometric and compound-decision tooling built
//! around the channel overlap matrix.

// `!(x > 0.0)` style checks are used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compound;
pub mod error;
pub mod families;
pub mod geometry;
pub mod linalg;
pub mod numeric;
pub mod overlap;
pub mod permanent;
pub mod spectrum;

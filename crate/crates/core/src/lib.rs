//! Optimal transport on the round sphere for the squared Euclidean cost.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod linalg;
pub mod measure;
pub mod mtw;
pub mod multimap;
pub mod par;
pub mod pipeline;
pub mod regularity;
pub mod solver;

pub use error::{Error, Result};

//! Structured-grid solvers for the conformal constraint system of general relativity.

// `!(x > 0.0)` rejects NaN as well; index loops walk several node arrays in step.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod barriers;
pub mod conformal_data;
pub mod coupled;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod lichnerowicz;
pub mod momentum;
pub mod operators;
pub mod regularity;
pub mod spectral;
pub mod verification;

pub use error::{ErrorClass, ForgeError, Result};

//! Lasso estimation for dependent, possibly heavy-tailed time series:
//! simulation of the data-generating processes, a coordinate-descent lasso,
//! empirical RE/DB certificates with the resulting error bounds, and a
//! Monte-Carlo experiment harness.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod dgm;
pub mod error;
pub mod experiment;
pub mod lasso;
pub mod matops;
pub mod seed;
pub mod tails;

pub use error::{Error, Result};
pub use matops::Matrix;

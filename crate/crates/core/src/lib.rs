//! Discrete Howitt-Warren flows: environments, kernels, webs, nets, exact
//! oracles and Monte Carlo estimators.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod environment;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod io;
pub mod measures;
pub mod mp_oracle;
pub mod nets;
pub mod walks;
pub mod webs;

pub use error::{Error, Result};

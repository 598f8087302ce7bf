//! Low-rank tensor multigrid for parameter-dependent diffusion problems.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cp;
pub mod discretize;
pub mod error;
pub mod expsum;
pub mod ht;
pub mod multigrid;
pub mod oracle;
pub mod par;

pub use error::{Error, Result};

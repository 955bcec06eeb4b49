//! Sparsity-based recovery of piecewise polynomial signals and piecewise planar images.
//!
//! Signals are modelled with an overparameterization `f = sum_j X_j b_j`, where the diagonal
//! matrices `X_j` hold known basis functions and the coefficient vectors `b_j` are piecewise
//! constant with shared jump locations. Three solvers are provided:
//!
//! * [`projection::optimal_projection`]: exact dynamic-programming projection onto
//!   piecewise polynomials with at most `k` jumps;
//! * [`sscosamp::sscosamp`]: signal-space CoSaMP built on that projection;
//! * [`bgapn::bgapn`]: block greedy analysis pursuit for arbitrary parameterizations and
//!   difference operators, optionally with a continuity penalty.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bgapn;
pub mod error;
pub mod harness;
pub mod imaging;
pub mod linalg;
pub mod operators;
pub mod projection;
pub mod recovery;
pub mod sscosamp;

pub use error::{Error, Result};
pub use recovery::RecoveryOutput;

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

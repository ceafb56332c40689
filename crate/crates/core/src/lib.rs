//! Prediction-correction splitting methods for separable convex programs
//! with linear coupling constraints.
//!
//! A scheme predicts `w̃ᵏ` by a sweep of block subproblems and corrects the
//! essential part of the iterate by `vᵏ⁺¹ = vᵏ − M(vᵏ − ṽᵏ)`, where `M` is
//! derived from a split `Qᵀ + Q = D + G` of the prediction matrix.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > y)` also rejects NaN.

pub mod certify;
pub mod correction;
pub mod driver;
pub mod error;
pub mod io;
pub mod matrix;
pub mod oracle;
pub mod predict;
pub mod problem;
pub mod subproblem;

pub use driver::{RunConfig, RunSummary, Runner, Scheme, Status};
pub use error::{Error, Result};
pub use problem::ProblemInstance;

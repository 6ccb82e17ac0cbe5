//! Incremental view maintenance for linear algebra programs.
//!
//! A program is a straight-line sequence of matrix expressions over declared
//! inputs. When an input changes by a low-rank update `u v'`, the delta of
//! every downstream view is itself low rank, so instead of re-evaluating the
//! program we compile per-input *triggers* that propagate factored deltas in
//! O(n^2) work where re-evaluation would pay O(n^3).
//!
//! The pipeline:
//!
//! 1. [`ir`] parses and shape-checks programs.
//! 2. [`delta`] applies symbolic delta rules and factors the result into
//!    narrow `U * V'` blocks.
//! 3. [`compiler`] assembles executable triggers, routing maintained
//!    inverses through Sherman-Morrison and falling back to unfactored
//!    propagation when rank growth makes factoring pointless.
//! 4. [`analytics`] and [`harness`] run the iterative workloads
//!    (powers, sums, general products, least squares) under re-evaluation,
//!    incremental, and hybrid strategies with exact operation counting.
//!
//! Every arithmetic kernel charges a [`CostLedger`], so reported costs are
//! exact multiply-add and addition counts, not estimates.

pub mod analytics;
pub mod compiler;
pub mod delta;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod harness;
pub mod io;
pub mod ir;
pub mod ledger;
pub mod matrix;
pub mod scalar;

pub use error::{Error, Result};
pub use ledger::{CostLedger, OpCounts};
pub use matrix::{
    add_assign, mat_add, mat_inverse, mat_mul, mat_scale, mat_sub, max_abs_diff, rel_frobenius,
    Matrix,
};
pub use scalar::Scalar;

/// Double-precision matrix, the default throughout the command-line tools.
pub type Mat = Matrix<f64>;
/// Single-precision matrix for memory-bound experiments.
pub type Mat32 = Matrix<f32>;

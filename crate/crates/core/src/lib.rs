//! Divergence-based hypothesis tests on finite alphabets.
//!
//! The test accepts the null `P0` iff `D(t || P0) < r`, where `t` is the
//! empirical type of the sample. The crate computes exact type-I/type-II
//! errors by enumerating types, Monte Carlo estimates, first- and
//! second-order predictions of `-ln β`, and the constrained minimizer and
//! type-rounding construction behind the second-order term.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod divergence;
pub mod error;
pub mod hypothesis;
pub mod numeric;
pub mod optimizer;
pub mod par;
pub mod rounding;
pub mod sampling;
pub mod simplex;
pub mod special;

pub use divergence::{DivergenceKind, DivergenceSpec, PqStatistics};
pub use error::{Error, Result};
pub use par::Exec;
pub use sampling::SeededSource;
pub use simplex::{Distribution, TypeDistribution};

//! Batch froth-flotation control as a POMDP: a kinetic prior, GP-based
//! beliefs, baseline controllers and an online tree-search planner.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod env;
pub mod experiments;
pub mod error;
pub mod gp;
pub mod ground_truth;
pub mod kinetic;
pub mod policies;
pub mod pomcp;

pub use error::{Error, Result};

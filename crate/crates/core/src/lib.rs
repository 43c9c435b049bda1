//! Bayes mixture predictors over parametric sequential sources, their
//! redundancy `D(Pⁿ‖Mⁿ)` computed exactly or by Monte Carlo, asymptotic
//! redundancy bounds, and an arithmetic coder driven by the mixtures.
//!
//! All information quantities are in nats unless a name says otherwise.

// `!(x > 0.0)` guards are written that way on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod coder;
pub mod error;
pub mod families;
pub mod fisher;
pub mod mixtures;
pub mod numeric;
pub mod redundancy;
pub mod rng;

pub use error::{Error, Result};

//! Experiment runner behind the `mixred` binary: configuration, series
//! computation, file compression and the invariant suite.

pub mod check;
pub mod codec;
pub mod config;
pub mod run;

//! End-to-end applications built on the estimator machinery.

pub mod barrier;
pub mod fluid;
pub mod ruin;

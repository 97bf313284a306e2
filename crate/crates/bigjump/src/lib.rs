//! Rare-event simulation for heavy-tailed random walks and compound Poisson
//! processes.
//!
//! The estimators implemented here are mixture importance samplers: with
//! probability `w` a path is drawn from the nominal measure, otherwise from
//! the nominal measure conditioned on an auxiliary set `B` of paths carrying
//! prescribed numbers of large jumps. Each replication is weighted by the
//! likelihood ratio
//!
//! ```text
//! L = [ w + (1 - w) 1_B / P(B) ]^(-1)
//! ```
//!
//! which keeps the estimator unbiased while the conditioning drives the
//! variance down far enough that the relative error stays bounded as the
//! event of interest rarefies (strong efficiency).
//!
//! The crate ships three worked applications on top of the generic machinery:
//! finite-horizon ruin of a reinsured risk process, the exercise probability
//! of a down-in barrier option, and level crossing of a reflected stochastic
//! fluid network driven by a Skorokhod map.

pub mod apps;
pub mod counts;
pub mod error;
pub mod estimator;
pub mod heavy_tails;
pub mod lattice;
pub mod multi;
pub mod paths;
pub mod rng;
pub mod skorokhod;

pub use error::{Error, Result};

//! Bayesian ROPE equivalence testing for weighted pre-crash scenario
//! datasets.
//!
//! The pipeline extracts kinematic metrics per scenario, fits candidate
//! distribution families to each dataset by weighted-likelihood MCMC,
//! selects a model per (metric, dataset) by WAIC, derives posterior
//! distributions of comparison statistics, and checks their highest
//! density intervals against regions of practical equivalence. A weighted
//! two-sample Kolmogorov-Smirnov test is reported alongside.

pub mod config;
pub mod decision;
pub mod dist;
pub mod error;
pub mod fit;
pub mod freq_ks;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod report;
pub mod scenario;
pub mod seed;
pub mod special;
pub mod stats;
pub mod synth;
pub mod weighted;

pub use error::{Error, Result};

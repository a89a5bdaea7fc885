//! Cell-free massive MIMO power-control workbench.
//!
//! The crate simulates a cell-free network of multi-antenna access points
//! serving single-antenna users, evaluates closed-form uplink/downlink
//! ergodic spectral efficiencies, and searches the uplink/downlink data
//! power allocation for Pareto-optimal trade-offs with multi-objective
//! Bayesian optimization (Monte-Carlo expected hypervolume improvement and
//! its noisy variant), benchmarked against scrambled-Sobol quasi-Monte-Carlo
//! sampling.
//!
//! Module map:
//! - [`topology`]: network generation (placement, fading, spatial
//!   covariances, pilot book)
//! - [`link_metrics`]: closed-form SINR/SE, objectives, Monte-Carlo
//!   realization oracle
//! - [`gp`]: per-objective Gaussian-process surrogates
//! - [`pareto`]: dominance, exact bi-objective hypervolume, archives
//! - [`sobol`]: scrambled Sobol low-discrepancy sequences
//! - [`acquisition`]: qEHVI / NEHVI estimators and acquisition maximization
//! - [`bo_loop`]: the end-to-end optimization driver
//!
//! All randomness flows through caller-supplied seeds; runs are
//! bit-reproducible regardless of thread count (enable/disable the
//! `parallel` feature freely).

pub mod acquisition;
pub mod bo_loop;
pub mod cmat;
pub mod error;
pub mod gp;
pub mod link_metrics;
pub mod par;
pub mod pareto;
pub mod rng;
pub mod sobol;
pub mod topology;

pub use error::{Error, Result};

//! Covariate balancing weights for continuous exposures.
//!
//! This crate estimates observation weights that make a continuous exposure
//! empirically independent of measured covariates by minimizing a weighted
//! distance-covariance criterion, then uses those weights in kernel and
//! doubly robust estimators of the average dose-response function.

pub mod cli;
pub mod data;
pub mod dependence;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod simulation;
pub mod solver;
mod util;

pub use data::{Dataset, DistanceStructures, WeightVector};
pub use diagnostics::{
    balance_table, default_balance_table, effective_sample_size, BalanceReport,
};
pub use error::{Error, Result};
pub use estimators::{adrf_curve, AdrfEstimate, EstimatorKind, Kernel};
pub use inference::{bootstrap_bands, BootstrapBands, BootstrapConfig};
pub use simulation::{run_experiment, DgpConfig, ExperimentMethod, ExperimentTable};
pub use solver::{
    independence_weights, MomentSpec, SolverConfig, WeightMethod, WeightsResult,
};

//! Partial-identification bounds on average and conditional average
//! treatment effects from a randomized study fused with an observational
//! study, under bounded violations of unconfoundedness (`ρ`) and study
//! exchangeability (`γ`).
//!
//! The pipeline: [`nuisance::cross_fit`] produces out-of-fold nuisance
//! predictions, [`bounds::bias_corrected_bounds`] turns them into bound
//! estimates with confidence intervals, [`compat::compat_both_arms`] tests
//! whether a `(ρ, γ)` pair is compatible with the data, and
//! [`frontier::compute_frontier`] sweeps a grid of pairs.

pub mod bounds;
pub mod cli;
pub mod compat;
pub mod error;
pub mod frontier;
pub mod io;
pub mod model;
pub mod nuisance;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    BoundEstimate, ColumnMapping, Dataset, FrontierCell, Interval, NuisanceEstimates, NuisanceRow,
    OutcomePolicy, Region, Schema, SensitivityPair, Unit, VarianceMethod,
};

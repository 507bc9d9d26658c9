//! Age-specific logistic regression for doubly censored event times.
//!
//! The event age `T` is only observed inside `(V, C]`. For an analysis age
//! `t0` the model is `logit P(T <= t0 | Z, T > V, V < t0) = alpha + beta'Z`,
//! estimated by inverse-probability-of-censoring weighted estimating
//! equations. See [`estimation`] for the estimating functions,
//! [`censoring`] for estimators of the censoring law, [`inference`] for
//! standard errors and [`simulation`] for the Monte Carlo harness.

pub mod censoring;
pub mod cli;
pub mod data;
pub mod error;
pub mod estimation;
pub mod inference;
mod linalg;
pub mod rng;
pub mod simulation;
pub mod smoothing;

pub use censoring::{CensoringModel, CensoringSpec, ForestParams, Query};
pub use data::{Dataset, SubjectRecord};
pub use error::{Error, Result};
pub use estimation::{logistic_prob, solve, Approach, CoefficientEstimate, SolveOptions, Theta};
pub use inference::{InferenceSummary, SeMethod};

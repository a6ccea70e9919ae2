//! Generalizable conditional average treatment effect (CATE) estimation
//! from randomized trials.
//!
//! The library fits honest causal forests on trial data, optionally
//! reweights trial rows by inverse participation probabilities (IPW), and
//! transports effect-modifier-conditional estimates to a source population
//! either directly or by g-formula Monte Carlo integration over the
//! remaining covariates. A synthetic data-generating process and a
//! replicated benchmark harness reproduce the estimator comparisons, and a
//! small CLI (`cate`) exposes the whole pipeline.

pub mod cli;
pub mod config;
pub mod data;
pub mod dgp;
pub mod error;
pub mod eval;
pub mod forest;
pub mod logistic;
pub mod matrix;
pub mod plot;
pub mod seed;
pub mod transport;

pub use error::{Error, Result};

//! Cost-weighted multi-objective knowledge-gradient Bayesian optimization.
//!
//! The crate models each objective with an independent Gaussian process,
//! scores candidate `(x, m)` pairs (a location and a single objective to
//! evaluate there) by the knowledge gradient of a linearly scalarized
//! posterior divided by the objective's evaluation cost, and drives a
//! budgeted optimization loop. Everything needed to reproduce the
//! synthetic benchmark study lives here too: problem generation, NSGA-II
//! Pareto estimation and the Bayesian-regret metric.
//!
//! Objective indices are zero-based throughout the library. File formats
//! written by the CLI use one-based indices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acq;
pub mod bo;
pub mod cli;
pub mod error;
pub mod gp;
pub mod hyperfit;
pub mod kg;
pub mod metrics;
pub mod normal;
pub mod optim;
pub mod pareto;
pub mod plot;
pub mod problems;
pub mod qmc;
pub mod selftest;

pub use error::{Error, Result};
pub use gp::{KernelSpec, NoiseModel, ObservationRecord, PosteriorState, Standardization};
pub use kg::CostVector;
pub use qmc::{SimplexWeight, SobolStream};

/// A point in the unit box `[0, 1]^D`.
pub type Point = Vec<f64>;

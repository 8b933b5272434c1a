//! Stochastic travelling waves for the Nagumo equation: finite-difference
//! SPDE solvers, the freezing method, wave position and speed estimators and
//! Monte-Carlo ensembles.

pub mod ensemble;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod ops;
pub mod stepper;
pub mod trajectory;
pub mod table;
pub mod tridiag;

pub use error::{Error, Result};

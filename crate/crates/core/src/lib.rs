//! Risk-calibrated robust covariance estimation for global minimum-variance
//! portfolios.
//!
//! The centerpiece is a shrinkage-Tyler scatter estimator whose shrinkage
//! intensity is chosen to minimize a consistent estimate of the realized
//! (out-of-sample) portfolio risk, together with the synthetic-data,
//! backtesting, and bootstrap-inference machinery needed to evaluate it.

pub mod asymptotic;
pub mod backtest;
pub mod bootstrap;
pub mod calibration;
pub mod cli;
pub mod covariance;
pub mod data;
pub mod portfolio;
pub mod synthetic;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

//! Value-at-risk estimation and backtesting for univariate P&L series.
//!
//! The crate provides:
//!
//! - classical window estimators (empirical quantile, Gaussian plug-in,
//!   Gaussian small-sample unbiased),
//! - GARCH(p, q) simulation and quasi-maximum-likelihood fitting with
//!   Gaussian or Student-t innovations, plus the matching one-step
//!   conditional VaR formulas,
//! - an LSTM quantile regressor trained on rolling windows,
//! - a rolling-window backtest harness scoring exception rates and mean
//!   quantile loss, with a Monte Carlo resampling experiment on top.
//!
//! Losses are reported as positive VaR numbers for a long position: a
//! return `y` breaches the estimate `v` when `y < -v`.

// Guards are written as `!(x > 0.0)` rather than `x <= 0.0` so that NaN
// inputs take the rejection branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod classical;
pub mod core;
pub mod error;
pub mod garch;
pub mod lstm;

pub use error::{Error, Result};

//! Forecasting market direction from efficient-frontier coefficients and
//! turning the forecast into a capped tangency portfolio.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod calendar;
pub mod cart;
pub mod cli;
pub mod config;
pub mod error;
pub mod features;
pub mod frontier;
pub mod market_data;
pub mod metrics;
pub mod optimizer;
pub mod report;
pub mod returns_model;
pub mod stats;
pub mod synthetic;

pub use calendar::YearMonth;
pub use error::{Error, Result};

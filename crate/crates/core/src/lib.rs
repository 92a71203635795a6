//! Spectral crisis indicators over rolling windows of index-component returns,
//! drawdown-based calibration, and a vote-driven cash/ETF trading strategy
//! evaluated against passive and random baselines.

pub mod calibration;
pub mod error;
pub mod evaluation;
pub mod indicators;
pub mod market_data;
pub mod pipeline;
pub mod references;
pub mod run;
pub mod spectra;
pub mod stats;
pub mod strategy;
pub mod synthetic;

pub use error::{Error, Result};

//! Ageing analysis for fleets of ring-oscillator sensors on FPGAs.
//!
//! The crate covers the whole pipeline: a fleet simulator with known ground
//! truth, relative shift statistics, robust outlier scoring, trend extraction
//! and trend tests, spatial degradation maps, forecasting and backtesting.

pub mod backtest;
pub mod error;
pub mod forecast;
pub mod model;
pub mod sim;
pub mod spatial;
pub mod stats;
pub mod trend;

pub use error::{Error, Result};
pub use model::{
    median, validate, Campaign, CovariateSeries, FleetDataset, FrequencySeries, GridLocation, Timestamp, Violation,
};

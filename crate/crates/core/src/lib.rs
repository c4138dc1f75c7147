//! Context-sampling anomaly detection for time series under domain shift.

pub mod agent;
pub mod baselines;
pub mod data;
pub mod detector;
pub mod env;
pub mod error;
pub mod inference;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;

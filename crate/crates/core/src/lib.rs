//! Sensorless monitoring of shipping containers with residual correction.
//!
//! Predicts internal container temperature and relative humidity from
//! weather data, adjusting ocean-leg predictions with residuals observed
//! earlier in the same shipment.

pub mod error;
pub mod eval;
pub mod features;
pub mod geotag;
pub mod rcm;
pub mod regress;
pub mod synth;
pub mod telemetry;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

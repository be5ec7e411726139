//! Hourly load reconstruction for customers that only have monthly bills.
//!
//! The pipeline clusters smart-meter customers into typical daily patterns
//! ([`spectral`]), trains a monthly-to-hourly disaggregation cascade per
//! pattern ([`mtsl`]), and identifies the pattern of each unmetered customer
//! ([`rbl`]) from the residuals of a branch-current state estimator
//! ([`bcse`]) running against a head-of-feeder phasor measurement.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the double-precision instantiation used by the CLI.

pub mod calendar;
pub mod customer;
pub mod error;
pub mod amigen;
pub mod bcse;
pub mod feeder;
pub mod metrics;
pub mod pipeline;
pub mod mtsl;
pub mod rbl;
pub mod scalar;
pub mod spectral;

pub use customer::{ClassId, CustomerType, PlantedClass, SubsetKey};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type FeederModel64 = feeder::FeederModel<f64>;
pub type CustomerRecord64 = amigen::CustomerRecord<f64>;
pub type DailyProfile64 = spectral::DailyProfile<f64>;
pub type PatternBank64 = spectral::PatternBank<f64>;
pub type MtslModel64 = mtsl::MtslModel<f64>;

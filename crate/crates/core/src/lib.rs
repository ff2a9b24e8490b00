//! Degree-day building energy modelling, Bayesian parameter inference, and
//! efficiency-fault analytics.
//!
//! The crate is organised around a daily change-point model of whole-building
//! energy use: a weather-insensitive baseload plus heating and cooling
//! responses that switch on below and above per-building balance-point
//! temperatures. [`model`] defines the model and least-squares fits, [`bayes`]
//! samples its posterior, [`region`] derives coarse parameters from annual
//! totals and builds region-wide reference distributions, [`ordering`]
//! compares posterior distributions across buildings, [`faults`] turns those
//! comparisons into inefficiency flags and probable causes, and [`synth`]
//! generates labelled synthetic datasets for end-to-end evaluation. [`ingest`]
//! reads and writes the on-disk CSV formats shared by all of them.

pub mod bayes;
pub mod error;
pub mod faults;
pub mod ingest;
pub mod model;
pub mod ordering;
pub mod region;
pub mod synth;

pub use error::{Error, Result};
pub use model::ParamPoint;

//! Calibration measurement and recalibration for binary classifiers.
//!
//! The crate covers the full pipeline: synthetic scores with controlled
//! miscalibration ([`dgp`]), a local polynomial regression engine
//! ([`locreg`]), calibration and discrimination metrics including the
//! Local Calibration Score ([`metrics`]), four post-hoc recalibrators
//! ([`recalib`]), a small random forest with classifier and regressor score
//! semantics ([`forest`]), tabular I/O and resampling ([`data`]) and the
//! replication studies that tie them together ([`harness`]).

pub mod cli;
pub mod data;
pub mod dgp;
pub mod error;
pub mod forest;
pub mod harness;
pub mod locreg;
pub mod metrics;
pub mod recalib;

pub use error::{Error, Result, Warning};
pub use metrics::LabeledScores;

/// Logistic function `1 / (1 + exp(-x))`. Saturates to 0 or 1 without NaN.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

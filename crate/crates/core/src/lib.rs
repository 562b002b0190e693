//! Fairness auditing for face verification systems.
//!
//! Per-individual error rates are measured on embedding trials at a
//! calibrated threshold, compared across demographic groups, and related to
//! image characteristics by correlation and multiple regression.
//!
//! ```no_run
//! use biasaudit::cohort::AttributeSchema;
//! use biasaudit::synth::{generate, SynthConfig};
//! use biasaudit::trials::{generate_trials, score_trials, TrialPolicy};
//! use biasaudit::calibration::{calibrate, ThresholdPolicy};
//!
//! let schema = AttributeSchema::standard();
//! let out = generate(&SynthConfig::default(), &schema).unwrap();
//! let trials = generate_trials(&out.cohort, &TrialPolicy::default(), 7).unwrap();
//! let trials = score_trials(&trials, &out.cohort).unwrap();
//! let op = calibrate(&trials, ThresholdPolicy::Eer).unwrap();
//! println!("tau = {}", op.tau);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calibration;
pub mod cli;
pub mod cohort;
pub mod error;
pub mod explain;
pub mod metrics;
pub mod pipeline;
pub mod report;
mod scalar;
pub mod stats;
pub mod synth;
pub mod trials;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type CorrelationResult64 = stats::CorrelationResult<f64>;
pub type CorrelationResult32 = stats::CorrelationResult<f32>;
pub type KruskalWallis64 = stats::KruskalWallis<f64>;
pub type KruskalWallis32 = stats::KruskalWallis<f32>;
pub type DesignMatrix64 = stats::DesignMatrix<f64>;
pub type DesignMatrix32 = stats::DesignMatrix<f32>;
pub type RegressionFit64 = stats::RegressionFit<f64>;
pub type RegressionFit32 = stats::RegressionFit<f32>;

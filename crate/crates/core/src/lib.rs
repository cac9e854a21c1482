//! Disaggregation of low-rate water-meter data into per-device consumption
//! with shape-initialized Bayesian sparse coding.
//!
//! The crate is `no_std` and allocates; file formats and the command line
//! live in the `hydrosep` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod data;
pub mod dictionary;
pub mod discriminative;
pub mod error;
pub mod gibbs;
pub mod inference;
pub mod metrics;
pub mod pipeline;
pub mod predictor;
pub mod sampling;
pub mod shapes;
pub mod special;
pub mod syngen;

pub use data::{AggregateMatrix, ConsumptionMatrix, Device, EventRecord, Matrix};
pub use dictionary::Dictionary;
pub use discriminative::AggregateModel;
pub use error::{Error, Result};
pub use gibbs::{GibbsConfig, GibbsSample, HUpdateMode};
pub use inference::DeviceModel;
pub use metrics::EvalReport;
pub use predictor::DisaggregationResult;

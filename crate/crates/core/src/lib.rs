//! Top-N recommendation toolkit.
//!
//! The pipeline runs ingest → filter → split → encode → fit → predict →
//! evaluate. Each stage lives in its own module and exchanges
//! [`data::InteractionLog`] and [`data::RecommendationList`] values.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod preprocessing;
pub mod rng;
pub mod splitters;
pub mod tuning;

pub use error::{Error, ErrorCategory, Result};

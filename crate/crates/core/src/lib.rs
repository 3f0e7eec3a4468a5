//! Mean-opinion-score prediction for synthetic speech.
//!
//! The crate covers the whole pipeline: listening-test ingestion
//! ([`dataset`]), evaluation metrics ([`metrics`]), frame-level neural
//! scorers with listener/domain conditioning and a phoneme side input
//! ([`strong`]), classical regressors over mean-pooled embeddings
//! ([`weak`]), and a four-stage stacking ensemble ([`stacking`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod audio;
pub mod augment;
pub mod backend;
pub mod config;
pub mod dataset;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod pipeline;
pub mod seed;
pub mod stacking;
pub mod strong;
pub mod synth;
pub mod textproc;
pub mod weak;

pub use error::{Error, Result};
pub use par::Exec;

//! Multimodal mmWave beam-prediction workbench.
//!
//! A seeded V2I scenario simulator produces beam sweeps and synchronized
//! camera, LiDAR, radar and GPS payloads; a small tensor engine trains a
//! transformer fusion model that maps any subset of sensors to a beam
//! posterior; the evaluator scores predictions in accuracy, spectral
//! efficiency and end-to-end latency.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamcore;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod modality;
pub mod model;
pub mod scenario;
pub mod seed;
pub mod sensing;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use modality::{Modality, ModalitySet};

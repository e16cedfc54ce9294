//! Video label propagation over super-trajectories.
//!
//! The pipeline turns frames plus forward/backward optical flow into dense
//! point trajectories ([`trajectory`]), groups them into super-trajectories
//! with a density-peaks clustering ([`dpc`], [`clustering`]) and propagates a
//! first-frame mask to every frame ([`segmentation`]). [`eval`] holds the IoU
//! metric, a synthetic sequence generator and the benchmark runner.

pub mod clustering;
pub mod config;
pub mod dpc;
pub mod error;
pub mod eval;
pub mod flow;
pub mod frame;
pub mod par;
pub mod segmentation;
pub mod trajectory;

pub use error::{Error, Result};

//! Discrete-event simulation of service function chain live migration
//! between two edge nodes over a shared link.
//!
//! - [`model`]: scenario description, validation and noise.
//! - [`patterns`]: migration plans and link reservations.
//! - [`engine`]: the event loop and its fluid bandwidth model.
//! - [`metrics`]: per-run measurements, statistics and calibration.
//! - [`experiment`]: repetitions and bandwidth/pattern sweeps.
//! - [`report`]: CSV writers.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod engine;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod par;
pub mod patterns;
pub mod report;

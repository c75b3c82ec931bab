//! camal: an instrumented LSM-tree key-value engine plus the machinery to tune it.
//!
//! The crate has three layers:
//!
//! * [`engine`] — a desk-scale LSM-tree (write buffer, leveled or tiered sorted
//!   runs of fixed-size blocks, per-level Bloom filters, LRU block cache) that
//!   counts every block it touches, and can migrate to a new configuration
//!   lazily through its normal compactions.
//! * [`analytic`] — closed-form I/O cost models for both compaction policies,
//!   their optimizers (size ratio, memory split), a calibrated CPU+I/O cost,
//!   and the scale-extrapolation rule.
//! * [`learner`], [`tuner`], [`dynamic`] — cost regressors (polynomial over
//!   cost-model basis functions, gradient-boosted trees), a decoupled
//!   active-learning tuner seeded by the analytic optima, and an online
//!   controller that detects workload drift and retunes the running engine.
//!
//! [`workload`] generates the deterministic operation streams everything else
//! consumes; [`cli`] wires the layers into subcommands.

pub mod analytic;
pub mod cli;
pub mod dynamic;
pub mod engine;
pub mod error;
pub mod learner;
pub mod tuner;
pub mod workload;

pub use error::{Error, Result};

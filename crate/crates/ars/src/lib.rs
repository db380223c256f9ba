//! Derivative-free random search over linear policies.
//!
//! The crate implements basic random search (BRS) and the four augmented
//! variants (V1, V1-t, V2, V2-t) that add reward-scaled steps, online state
//! whitening, and top-direction selection. Policies are linear maps of the
//! (optionally whitened) state. Perturbation directions are slices of a
//! shared table of standard-normal values, so parallel workers exchange
//! table indices instead of matrices, and every run is a pure function of a
//! single master seed.
//!
//! Built-in environments: a linear-quadratic regulator (including the
//! standard unstable 3-state benchmark instance), a deterministic quadratic
//! toy, and a point-mass survival task. [`lqr_analysis`] provides the
//! ground truth for the LQR benchmark: Riccati solution, optimal gain,
//! average cost of an arbitrary gain, and a model-based (nominal) baseline
//! synthesized from least-squares system identification.
//!
//! The [`harness`] module runs seed sweeps and hyperparameter grids, emits
//! JSONL learning curves plus CSV summaries, and recomputes every reported
//! metric from the curve files for verification.

pub mod ars_core;
pub mod env;
pub mod error;
pub mod executor;
pub mod harness;
pub mod lqr_analysis;
pub mod policy;
pub mod rng;

pub use ars_core::{ArsConfig, IterationRecord, SampleCounters, StopCondition, TrainOptions};
pub use error::{ArsError, Result};
pub use policy::{ArsVersion, PolicyParams, RunningStat, Sign};
pub use rng::{NoiseTable, SeedHierarchy};

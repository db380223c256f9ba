//! Experiment orchestration and reporting: seed sweeps, hyperparameter
//! grids, learning-curve metrics, the LQR benchmark, and file emission
//! (JSONL curves, CSV summaries, JSON manifests for exact replay).

pub mod io;
pub mod lqr_bench;
pub mod metrics;
pub mod presets;
pub mod sweep;

pub use lqr_bench::{run_lqr_bench, LqrBenchSpec};
pub use metrics::{
    averaged_max_reward, curve_from_records, episodes_to_threshold, percentile_interpolated,
    percentile_report, timesteps_to_threshold, CurvePoint, PercentileTable, DEFAULT_PERCENTILES,
};
pub use presets::{grid_preset, GridPreset, GRID_PRESETS};
pub use sweep::{
    expand_grid, replay_manifest, run_experiment, verify_summary, ExperimentOutput, GridPoint,
    GridSpec, Manifest, SeedSpec, SweepSpec,
};

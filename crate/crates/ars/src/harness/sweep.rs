//! Seed sweeps and hyperparameter grids with exact-replay manifests.
//!
//! A sweep runs every grid point on every seed, one job per (point, seed),
//! each with its own seed hierarchy. Jobs run sequentially; the parallelism
//! lives inside each job's rollout batches. Outputs per run: a JSONL curve
//! file; per sweep: a CSV summary (per-seed rows plus mean-over-seeds rows)
//! and a JSON manifest from which `replay_manifest` reproduces every output
//! byte for byte.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::ars_core::{train, ArsConfig, StopCondition, TrainOptions};
use crate::env::EnvDef;
use crate::error::{ArsError, Result};
use crate::policy::ArsVersion;
use crate::rng::{RngStream, DEFAULT_NOISE_TABLE_LEN};

use super::io;
use super::metrics::{
    averaged_max_reward, curve_from_records, episodes_to_threshold, timesteps_to_threshold,
    CurvePoint,
};

/// Axes of the hyperparameter grid. For versions without top-direction
/// selection the `top_bs` axis is ignored and `b = N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alphas: Vec<f64>,
    pub nus: Vec<f64>,
    pub num_directions: Vec<usize>,
    #[serde(default)]
    pub top_bs: Vec<usize>,
    pub versions: Vec<ArsVersion>,
}

/// One resolved grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub nu: f64,
    pub num_directions: usize,
    pub top_b: usize,
    pub version: ArsVersion,
}

/// Expand the axes into concrete grid points, dropping invalid `b > N`
/// combinations.
pub fn expand_grid(grid: &GridSpec) -> Vec<GridPoint> {
    let mut points = Vec::new();
    for &version in &grid.versions {
        for &alpha in &grid.alphas {
            for &nu in &grid.nus {
                for &n in &grid.num_directions {
                    if version.allows_partial_top() && !grid.top_bs.is_empty() {
                        for &b in &grid.top_bs {
                            if b <= n {
                                points.push(GridPoint {
                                    alpha,
                                    nu,
                                    num_directions: n,
                                    top_b: b,
                                    version,
                                });
                            }
                        }
                    } else {
                        points.push(GridPoint { alpha, nu, num_directions: n, top_b: n, version });
                    }
                }
            }
        }
    }
    points
}

/// Seeds either listed explicitly or sampled uniformly from an interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SeedSpec {
    List(Vec<u64>),
    Sample { count: usize, lo: u64, hi: u64, meta_seed: u64 },
}

impl SeedSpec {
    /// Resolve to a concrete seed list. Sampling is itself deterministic in
    /// `meta_seed`; manifests always store the resolved list.
    pub fn resolve(&self) -> Result<Vec<u64>> {
        match self {
            SeedSpec::List(seeds) => Ok(seeds.clone()),
            SeedSpec::Sample { count, lo, hi, meta_seed } => {
                if lo >= hi {
                    return Err(ArsError::Config(format!(
                        "seed interval [{lo}, {hi}) is empty"
                    )));
                }
                let mut rng = RngStream::seed_from_u64(*meta_seed);
                Ok((0..*count).map(|_| rng.random_range(*lo..*hi)).collect())
            }
        }
    }
}

/// Full description of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub env: EnvDef,
    pub grid: GridSpec,
    pub seeds: SeedSpec,
    pub horizon: usize,
    #[serde(default = "default_table_len")]
    pub noise_table_len: usize,
    pub stop: StopCondition,
    pub eval_every: u64,
    pub eval_rollouts: usize,
    /// Reward threshold used for the summary's time-to-threshold metrics.
    #[serde(default)]
    pub threshold: Option<f64>,
    /// Timestep budget for the averaged-max-reward metric on mean rows.
    #[serde(default)]
    pub metric_budget: Option<u64>,
    /// Attach gain snapshots to curve points (LQR benchmarking).
    #[serde(default)]
    pub record_gain_snapshots: bool,
}

fn default_table_len() -> usize {
    DEFAULT_NOISE_TABLE_LEN
}

impl SweepSpec {
    pub fn config_for(&self, point: &GridPoint, seed: u64) -> ArsConfig {
        ArsConfig {
            alpha: point.alpha,
            num_directions: point.num_directions,
            nu: point.nu,
            top_b: point.top_b,
            version: point.version,
            horizon: self.horizon,
            master_seed: seed,
            noise_table_len: self.noise_table_len,
        }
    }
}

/// Everything needed to reproduce a sweep exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub spec: SweepSpec,
    pub grid_points: Vec<GridPoint>,
    pub seeds: Vec<u64>,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub grid_index: usize,
    pub seed: u64,
    pub curve_file: String,
}

/// One row of `summary.csv`. Seed rows carry one run; mean rows aggregate
/// all seeds of a grid point (count columns become fractional means there).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scope: String,
    pub grid_index: usize,
    pub version: String,
    pub alpha: f64,
    pub nu: f64,
    pub num_directions: usize,
    pub top_b: usize,
    pub seed: Option<u64>,
    pub runs: usize,
    pub iterations: f64,
    pub episodes: f64,
    pub timesteps: f64,
    pub final_eval_reward: f64,
    pub best_eval_reward: f64,
    pub episodes_to_threshold: Option<f64>,
    pub timesteps_to_threshold: Option<f64>,
    pub averaged_max_reward: Option<f64>,
}

pub struct ExperimentOutput {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub summary: Vec<SummaryRow>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.csv";

fn curve_file_name(grid_index: usize, seed: u64) -> String {
    format!("curve_g{grid_index:03}_s{seed}.jsonl")
}

fn seed_row(
    spec: &SweepSpec,
    point: &GridPoint,
    grid_index: usize,
    seed: u64,
    curve: &[CurvePoint],
) -> SummaryRow {
    let last = curve.last();
    let best = curve.iter().map(|p| p.eval_reward).fold(f64::NEG_INFINITY, f64::max);
    SummaryRow {
        scope: "seed".into(),
        grid_index,
        version: point.version.to_string(),
        alpha: point.alpha,
        nu: point.nu,
        num_directions: point.num_directions,
        top_b: point.top_b,
        seed: Some(seed),
        runs: 1,
        iterations: last.map_or(0.0, |p| p.iteration as f64),
        episodes: last.map_or(0.0, |p| p.episodes as f64),
        timesteps: last.map_or(0.0, |p| p.timesteps as f64),
        final_eval_reward: last.map_or(f64::NEG_INFINITY, |p| p.eval_reward),
        best_eval_reward: best,
        episodes_to_threshold: spec
            .threshold
            .and_then(|t| episodes_to_threshold(curve, t))
            .map(|e| e as f64),
        timesteps_to_threshold: spec
            .threshold
            .and_then(|t| timesteps_to_threshold(curve, t))
            .map(|e| e as f64),
        averaged_max_reward: None,
    }
}

fn mean_row(
    spec: &SweepSpec,
    point: &GridPoint,
    grid_index: usize,
    seed_rows: &[SummaryRow],
    curves: &[Vec<CurvePoint>],
) -> Result<SummaryRow> {
    let n = seed_rows.len() as f64;
    let mean = |f: &dyn Fn(&SummaryRow) -> f64| seed_rows.iter().map(f).sum::<f64>() / n;
    // Mean time-to-threshold is reported only when every seed reached it
    // (the standard "N/A otherwise" convention).
    let mean_opt = |f: &dyn Fn(&SummaryRow) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = seed_rows.iter().filter_map(f).collect();
        (vals.len() == seed_rows.len()).then(|| vals.iter().sum::<f64>() / n)
    };
    let amr = match spec.metric_budget {
        Some(budget) => Some(averaged_max_reward(curves, budget)?),
        None => None,
    };
    Ok(SummaryRow {
        scope: "mean".into(),
        grid_index,
        version: point.version.to_string(),
        alpha: point.alpha,
        nu: point.nu,
        num_directions: point.num_directions,
        top_b: point.top_b,
        seed: None,
        runs: seed_rows.len(),
        iterations: mean(&|r| r.iterations),
        episodes: mean(&|r| r.episodes),
        timesteps: mean(&|r| r.timesteps),
        final_eval_reward: mean(&|r| r.final_eval_reward),
        best_eval_reward: mean(&|r| r.best_eval_reward),
        episodes_to_threshold: mean_opt(&|r| r.episodes_to_threshold),
        timesteps_to_threshold: mean_opt(&|r| r.timesteps_to_threshold),
        averaged_max_reward: amr,
    })
}

fn build_summary(
    spec: &SweepSpec,
    grid_points: &[GridPoint],
    seeds: &[u64],
    curves: &dyn Fn(usize, u64) -> Result<Vec<CurvePoint>>,
) -> Result<Vec<SummaryRow>> {
    let mut summary = Vec::new();
    for (gi, point) in grid_points.iter().enumerate() {
        let mut rows = Vec::new();
        let mut point_curves = Vec::new();
        for &seed in seeds {
            let curve = curves(gi, seed)?;
            rows.push(seed_row(spec, point, gi, seed, &curve));
            point_curves.push(curve);
        }
        let mean = mean_row(spec, point, gi, &rows, &point_curves)?;
        summary.extend(rows);
        summary.push(mean);
    }
    Ok(summary)
}

fn validate_spec(spec: &SweepSpec, grid_points: &[GridPoint], seeds: &[u64]) -> Result<()> {
    if grid_points.is_empty() {
        return Err(ArsError::Config("hyperparameter grid is empty".into()));
    }
    if seeds.is_empty() {
        return Err(ArsError::Config("seed set is empty".into()));
    }
    let mut unique = seeds.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != seeds.len() {
        return Err(ArsError::Config("seed list contains duplicates".into()));
    }
    for point in grid_points {
        let config = spec.config_for(point, seeds[0]);
        crate::ars_core::validate_run(&config, &spec.env)?;
    }
    let opts = TrainOptions {
        stop: spec.stop,
        eval_every: spec.eval_every,
        eval_rollouts: spec.eval_rollouts,
        workers: 1,
        record_gain_snapshots: spec.record_gain_snapshots,
    };
    opts.validate()
}

/// Run the sweep and write curves, summary, and manifest under `out_dir`.
///
/// Fails before any run starts when the spec is invalid. After writing the
/// summary it re-derives every metric from the curve files on disk and
/// asserts equality ([`verify_summary`]).
pub fn run_experiment(spec: &SweepSpec, out_dir: &Path, workers: usize) -> Result<ExperimentOutput> {
    let grid_points = expand_grid(&spec.grid);
    let seeds = spec.seeds.resolve()?;
    validate_spec(spec, &grid_points, &seeds)?;
    std::fs::create_dir_all(out_dir)?;

    // The manifest stores the resolved seed list so replay never re-samples.
    let mut resolved_spec = spec.clone();
    resolved_spec.seeds = SeedSpec::List(seeds.clone());

    let opts = TrainOptions {
        stop: spec.stop,
        eval_every: spec.eval_every,
        eval_rollouts: spec.eval_rollouts,
        workers,
        record_gain_snapshots: spec.record_gain_snapshots,
    };

    let mut entries = Vec::new();
    for (gi, point) in grid_points.iter().enumerate() {
        for &seed in &seeds {
            let config = spec.config_for(point, seed);
            let result = train(&config, &spec.env, &opts)?;
            let curve = curve_from_records(&result.records);
            let file = curve_file_name(gi, seed);
            io::write_curve_jsonl(&out_dir.join(&file), &curve)?;
            entries.push(ManifestEntry { grid_index: gi, seed, curve_file: file });
        }
    }

    let summary = build_summary(spec, &grid_points, &seeds, &|gi, seed| {
        io::read_curve_jsonl(&out_dir.join(curve_file_name(gi, seed)))
    })?;
    io::write_csv(&out_dir.join(SUMMARY_FILE), &summary)?;

    let manifest = Manifest {
        schema: format!("{}-manifest", io::SCHEMA_VERSION),
        spec: resolved_spec,
        grid_points,
        seeds,
        entries,
    };
    io::write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;

    verify_summary(out_dir)?;
    Ok(ExperimentOutput { out_dir: out_dir.to_path_buf(), manifest, summary })
}

/// Recompute every summary metric from the curve files alone and require
/// exact agreement with `summary.csv`.
pub fn verify_summary(out_dir: &Path) -> Result<()> {
    let manifest: Manifest = io::read_json(&out_dir.join(MANIFEST_FILE))?;
    let recomputed = build_summary(
        &manifest.spec,
        &manifest.grid_points,
        &manifest.seeds,
        &|gi, seed| io::read_curve_jsonl(&out_dir.join(curve_file_name(gi, seed))),
    )?;
    let on_disk: Vec<SummaryRow> = io::read_csv(&out_dir.join(SUMMARY_FILE))?;
    if recomputed.len() != on_disk.len() {
        return Err(ArsError::Contract(format!(
            "summary has {} rows on disk, {} recomputed",
            on_disk.len(),
            recomputed.len()
        )));
    }
    for (i, (a, b)) in on_disk.iter().zip(recomputed.iter()).enumerate() {
        if a != b {
            return Err(ArsError::Contract(format!(
                "summary row {i} does not match its recomputation:\n  disk: {a:?}\n  new:  {b:?}"
            )));
        }
    }
    Ok(())
}

/// Re-run a sweep from its manifest. With the same manifest the produced
/// curve files are byte-identical regardless of worker count.
pub fn replay_manifest(manifest_path: &Path, out_dir: &Path, workers: usize) -> Result<ExperimentOutput> {
    let manifest: Manifest = io::read_json(manifest_path)?;
    run_experiment(&manifest.spec, out_dir, workers)
}

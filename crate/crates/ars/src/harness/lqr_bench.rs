//! LQR benchmark: stabilization frequency and relative cost versus sample
//! budget, for random search and for the model-based (nominal) baseline.
//!
//! For each seed, one training run records gain snapshots at its evaluation
//! points; at every budget on the grid the latest snapshot within budget is
//! scored against the true instance. The nominal baseline identifies
//! `(A, B)` from pure-noise rollouts of the same sample budget and solves
//! the Riccati equation on the estimates. Budgets are in timesteps; the
//! report also carries the episode count consumed at each point, so either
//! axis can be plotted.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ars_core::{train, ArsConfig, StopCondition, TrainOptions};
use crate::env::{EnvDef, EnvName, LqrInstance};
use crate::error::{ArsError, Result};
use crate::lqr_analysis::{
    average_cost, collect_excitation_data, evaluate_gain, nominal_synthesis, solve_riccati,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::policy::ArsVersion;

use super::io;
use super::metrics::{curve_from_records, percentile_interpolated, CurvePoint, DEFAULT_PERCENTILES};

/// Stabilization and relative-cost statistics at one sample budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrReportRow {
    /// Training timesteps allowed.
    pub budget_timesteps: u64,
    /// Mean training episodes actually consumed at the scored snapshots.
    pub mean_episodes: f64,
    pub stable_fraction: f64,
    pub stable_count: usize,
    /// Seeds whose gain is not stabilizing at this budget (their relative
    /// cost is infinite and excluded from the percentiles).
    pub censored: usize,
    /// Relative-cost percentiles over the stable seeds, aligned with the
    /// requested percentile list; `None` when no seed is stable yet.
    pub relative_cost_percentiles: Vec<Option<f64>>,
}

/// Extract the instance behind an LQR environment definition.
pub fn lqr_instance_of(env: &EnvDef) -> Result<LqrInstance> {
    match &env.name {
        EnvName::LqrPaper => Ok(LqrInstance::benchmark_instance()),
        EnvName::LqrFile(path) => LqrInstance::from_matrix_file(path),
        other => Err(ArsError::Config(format!("{other} is not an LQR environment"))),
    }
}

fn gain_at_budget(inst: &LqrInstance, curve: &[CurvePoint], budget: u64) -> (DMatrix<f64>, u64) {
    let (p, n) = (inst.action_dim(), inst.state_dim());
    let mut gain = DMatrix::zeros(p, n);
    let mut episodes = 0;
    for point in curve {
        if point.timesteps > budget {
            break;
        }
        if let Some(snapshot) = &point.gain {
            gain = DMatrix::from_row_slice(p, n, snapshot);
            episodes = point.episodes;
        }
    }
    (gain, episodes)
}

/// Score per-seed training curves (with gain snapshots) against the true
/// instance at every budget. Whitened versions are rejected: their state
/// statistics are meaningless on LQR and their gain is not a plain `K`.
pub fn lqr_report(
    inst: &LqrInstance,
    version: ArsVersion,
    curves: &[Vec<CurvePoint>],
    budgets: &[u64],
    percentiles: &[f64],
) -> Result<Vec<LqrReportRow>> {
    if version.whitens() {
        return Err(ArsError::Config(format!(
            "LQR reporting requires a V1-family run (the gain is the controller directly); got {version}"
        )));
    }
    if curves.is_empty() {
        return Err(ArsError::Config("no runs supplied".into()));
    }
    let riccati = solve_riccati(inst, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let optimal_cost = average_cost(inst, &riccati.k_opt, DEFAULT_TOL)?;
    let mut rows = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let mut rel_costs = Vec::new();
        let mut episodes_sum = 0u64;
        let mut censored = 0usize;
        for curve in curves {
            let (gain, episodes) = gain_at_budget(inst, curve, budget);
            episodes_sum += episodes;
            let eval = evaluate_gain(inst, &gain, optimal_cost)?;
            if eval.stable {
                rel_costs.push(eval.relative_cost);
            } else {
                censored += 1;
            }
        }
        rel_costs.sort_by(f64::total_cmp);
        let percentile_values = percentiles
            .iter()
            .map(|&q| {
                if rel_costs.is_empty() {
                    None
                } else {
                    Some(percentile_interpolated(&rel_costs, q))
                }
            })
            .collect();
        rows.push(LqrReportRow {
            budget_timesteps: budget,
            mean_episodes: episodes_sum as f64 / curves.len() as f64,
            stable_fraction: rel_costs.len() as f64 / curves.len() as f64,
            stable_count: rel_costs.len(),
            censored,
            relative_cost_percentiles: percentile_values,
        });
    }
    Ok(rows)
}

/// Nominal-baseline stabilization frequency at each budget: identify from
/// `budget / rollout_len` pure-noise rollouts, synthesize, score. One trial
/// per seed; identification failures count as non-stabilizing.
pub fn nominal_frequency(
    inst: &LqrInstance,
    seeds: &[u64],
    budgets: &[u64],
    rollout_len: usize,
) -> Result<Vec<(u64, f64)>> {
    if rollout_len == 0 {
        return Err(ArsError::Config("nominal rollout length must be positive".into()));
    }
    let riccati = solve_riccati(inst, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let optimal_cost = average_cost(inst, &riccati.k_opt, DEFAULT_TOL)?;
    let mut out = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let rollouts = (budget as usize / rollout_len).max(1);
        let mut stable = 0usize;
        for &seed in seeds {
            let data = collect_excitation_data(inst, rollouts, rollout_len, seed);
            match nominal_synthesis(&data, inst, optimal_cost) {
                Ok(eval) if eval.stable => stable += 1,
                _ => {}
            }
        }
        out.push((budget, stable as f64 / seeds.len() as f64));
    }
    Ok(out)
}

/// Full benchmark specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrBenchSpec {
    pub env: EnvDef,
    /// Base hyperparameters; `master_seed` is replaced per seed.
    pub config: ArsConfig,
    pub seeds: Vec<u64>,
    /// Sample-budget grid in training timesteps.
    pub budgets: Vec<u64>,
    pub eval_every: u64,
    pub eval_rollouts: usize,
    pub nominal_rollout_len: usize,
}

/// One row of `lqr_report.csv`: the default percentiles flattened into
/// fixed columns next to the nominal baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrBenchRow {
    pub budget_timesteps: u64,
    pub ars_mean_episodes: f64,
    pub ars_stable_fraction: f64,
    pub ars_censored: usize,
    pub relcost_p02: Option<f64>,
    pub relcost_p10: Option<f64>,
    pub relcost_p25: Option<f64>,
    pub relcost_p50: Option<f64>,
    pub relcost_p75: Option<f64>,
    pub relcost_p90: Option<f64>,
    pub relcost_p98: Option<f64>,
    pub nominal_rollouts: usize,
    pub nominal_stable_fraction: f64,
}

pub struct LqrBenchOutput {
    pub rows: Vec<LqrBenchRow>,
    pub ars_rows: Vec<LqrReportRow>,
    pub nominal: Vec<(u64, f64)>,
}

pub const LQR_REPORT_FILE: &str = "lqr_report.csv";
pub const LQR_SPEC_FILE: &str = "lqr_bench_spec.json";

/// Run the benchmark and write per-seed curves plus `lqr_report.csv` under
/// `out_dir`.
pub fn run_lqr_bench(spec: &LqrBenchSpec, out_dir: &Path, workers: usize) -> Result<LqrBenchOutput> {
    if spec.seeds.is_empty() || spec.budgets.is_empty() {
        return Err(ArsError::Config("seeds and budgets must be nonempty".into()));
    }
    let inst = lqr_instance_of(&spec.env)?;
    crate::ars_core::validate_run(&spec.config, &spec.env)?;
    let max_budget = *spec.budgets.iter().max().unwrap();
    std::fs::create_dir_all(out_dir)?;

    let mut curves = Vec::with_capacity(spec.seeds.len());
    for &seed in &spec.seeds {
        let mut config = spec.config.clone();
        config.master_seed = seed;
        let opts = TrainOptions {
            stop: StopCondition::max_timesteps(max_budget),
            eval_every: spec.eval_every,
            eval_rollouts: spec.eval_rollouts,
            workers,
            record_gain_snapshots: true,
        };
        let result = train(&config, &spec.env, &opts)?;
        let curve = curve_from_records(&result.records);
        io::write_curve_jsonl(&out_dir.join(format!("lqr_curve_s{seed}.jsonl")), &curve)?;
        curves.push(curve);
    }

    let ars_rows =
        lqr_report(&inst, spec.config.version, &curves, &spec.budgets, &DEFAULT_PERCENTILES)?;
    let nominal = nominal_frequency(&inst, &spec.seeds, &spec.budgets, spec.nominal_rollout_len)?;

    let rows: Vec<LqrBenchRow> = ars_rows
        .iter()
        .zip(&nominal)
        .map(|(a, (budget, freq))| {
            debug_assert_eq!(a.budget_timesteps, *budget);
            let p = &a.relative_cost_percentiles;
            LqrBenchRow {
                budget_timesteps: a.budget_timesteps,
                ars_mean_episodes: a.mean_episodes,
                ars_stable_fraction: a.stable_fraction,
                ars_censored: a.censored,
                relcost_p02: p[0],
                relcost_p10: p[1],
                relcost_p25: p[2],
                relcost_p50: p[3],
                relcost_p75: p[4],
                relcost_p90: p[5],
                relcost_p98: p[6],
                nominal_rollouts: (a.budget_timesteps as usize / spec.nominal_rollout_len).max(1),
                nominal_stable_fraction: *freq,
            }
        })
        .collect();

    io::write_csv(&out_dir.join(LQR_REPORT_FILE), &rows)?;
    io::write_json(&out_dir.join(LQR_SPEC_FILE), spec)?;
    Ok(LqrBenchOutput { rows, ars_rows, nominal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqr_analysis::is_stable;

    fn snapshot_curve(gain: &DMatrix<f64>, timesteps: u64) -> Vec<CurvePoint> {
        vec![CurvePoint {
            iteration: 1,
            episodes: timesteps / 100,
            timesteps,
            eval_reward: 0.0,
            gain: Some(gain.iter().copied().collect()),
        }]
    }

    #[test]
    fn optimal_gain_reports_frequency_one_and_cost_one() {
        let inst = LqrInstance::benchmark_instance();
        let sol = solve_riccati(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        // nalgebra iterates column-major; store snapshots row-major.
        let row_major: Vec<f64> =
            (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| sol.k_opt[(i, j)]).collect();
        let curve = vec![CurvePoint {
            iteration: 1,
            episodes: 10,
            timesteps: 1000,
            eval_reward: 0.0,
            gain: Some(row_major),
        }];
        let rows =
            lqr_report(&inst, ArsVersion::V1, &[curve.clone(), curve], &[1000], &[50.0]).unwrap();
        assert_eq!(rows[0].stable_fraction, 1.0);
        assert_eq!(rows[0].censored, 0);
        assert_eq!(rows[0].relative_cost_percentiles[0], Some(1.0));
    }

    #[test]
    fn zero_gain_reports_frequency_zero() {
        let inst = LqrInstance::benchmark_instance();
        let zero = DMatrix::zeros(3, 3);
        let rows = lqr_report(
            &inst,
            ArsVersion::V1,
            &[snapshot_curve(&zero, 500)],
            &[1000],
            &DEFAULT_PERCENTILES,
        )
        .unwrap();
        assert_eq!(rows[0].stable_fraction, 0.0);
        assert_eq!(rows[0].censored, 1);
        assert!(rows[0].relative_cost_percentiles.iter().all(|p| p.is_none()));
    }

    #[test]
    fn budget_before_first_snapshot_scores_zero_gain() {
        let inst = LqrInstance::benchmark_instance();
        let sol = solve_riccati(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let (gain, episodes) = gain_at_budget(&inst, &snapshot_curve(&sol.k_opt, 5000), 100);
        assert_eq!(gain, DMatrix::zeros(3, 3));
        assert_eq!(episodes, 0);
        assert!(!is_stable(&inst, &gain).unwrap());
    }

    #[test]
    fn whitened_versions_rejected() {
        let inst = LqrInstance::benchmark_instance();
        let curve = snapshot_curve(&DMatrix::zeros(3, 3), 100);
        assert!(lqr_report(&inst, ArsVersion::V2, &[curve], &[100], &[50.0]).is_err());
    }

    #[test]
    fn nominal_frequency_monotone_region() {
        let inst = LqrInstance::benchmark_instance();
        let seeds: Vec<u64> = (0..20).collect();
        let freqs = nominal_frequency(&inst, &seeds, &[100, 2000], 10).unwrap();
        // 10 rollouts of 10 steps stabilize sometimes; 200 rollouts nearly
        // always.
        assert!(freqs[1].1 >= freqs[0].1);
        assert!(freqs[1].1 >= 0.95, "nominal at 2000 steps: {}", freqs[1].1);
    }

    #[test]
    fn bench_smoke_run_writes_report() {
        let dir = tempfile::tempdir().unwrap();
        let spec = LqrBenchSpec {
            env: EnvDef::new(EnvName::LqrPaper),
            config: ArsConfig {
                alpha: 0.01,
                num_directions: 2,
                nu: 0.05,
                top_b: 2,
                version: ArsVersion::V1,
                horizon: 30,
                master_seed: 0,
                noise_table_len: 4000,
            },
            seeds: vec![1, 2],
            budgets: vec![240, 480],
            eval_every: 1,
            eval_rollouts: 2,
            nominal_rollout_len: 10,
        };
        let out = run_lqr_bench(&spec, dir.path(), 1).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(dir.path().join(LQR_REPORT_FILE).exists());
        assert!(dir.path().join("lqr_curve_s1.jsonl").exists());
        // The report reads back identically.
        let read: Vec<LqrBenchRow> = io::read_csv(&dir.path().join(LQR_REPORT_FILE)).unwrap();
        assert_eq!(read, out.rows);
    }
}

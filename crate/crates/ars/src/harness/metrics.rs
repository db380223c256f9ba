//! Learning-curve metrics.
//!
//! A curve is the sequence of evaluated points of one training run. Metrics
//! are recomputable from curve files alone; the sweep harness re-derives
//! them in a verification pass after writing summaries.

use serde::{Deserialize, Serialize};

use crate::ars_core::IterationRecord;
use crate::error::{ArsError, Result};

/// Percentiles reported by default: median plus the spread bands.
pub const DEFAULT_PERCENTILES: [f64; 7] = [2.0, 10.0, 25.0, 50.0, 75.0, 90.0, 98.0];

/// One evaluated point of a training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Iterations completed when the evaluation ran.
    pub iteration: u64,
    /// Training episodes consumed so far (evaluation episodes excluded).
    pub episodes: u64,
    /// Training timesteps consumed so far (evaluation timesteps excluded).
    pub timesteps: u64,
    pub eval_reward: f64,
    /// Row-major gain snapshot, when the run recorded one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gain: Option<Vec<f64>>,
}

/// Extract the evaluated points of a run.
pub fn curve_from_records(records: &[IterationRecord]) -> Vec<CurvePoint> {
    records
        .iter()
        .filter_map(|r| {
            r.eval_reward.map(|reward| CurvePoint {
                iteration: r.iteration + 1,
                episodes: r.episodes_so_far,
                timesteps: r.timesteps_so_far,
                eval_reward: reward,
                gain: r.policy_snapshot.clone(),
            })
        })
        .collect()
}

/// Training episodes at the first point whose reward meets the threshold
/// (closed comparison); `None` when the curve never reaches it.
pub fn episodes_to_threshold(curve: &[CurvePoint], threshold: f64) -> Option<u64> {
    curve.iter().find(|p| p.eval_reward >= threshold).map(|p| p.episodes)
}

/// Same as [`episodes_to_threshold`] but in timesteps.
pub fn timesteps_to_threshold(curve: &[CurvePoint], threshold: f64) -> Option<u64> {
    curve.iter().find(|p| p.eval_reward >= threshold).map(|p| p.timesteps)
}

fn check_aligned(curves: &[Vec<CurvePoint>]) -> Result<usize> {
    let Some(first) = curves.first() else {
        return Err(ArsError::Contract("at least one curve is required".into()));
    };
    for c in curves.iter().skip(1) {
        if c.len() != first.len()
            || c.iter().zip(first.iter()).any(|(a, b)| a.iteration != b.iteration)
        {
            return Err(ArsError::Contract(
                "curves must be aligned by iteration index (same evaluation cadence)".into(),
            ));
        }
    }
    Ok(first.len())
}

/// Conservative max-reward-within-budget metric over seeds.
///
/// Average the curves pointwise, cut at the first index where the slowest
/// seed has depleted the timestep budget, and take the best averaged reward
/// up to the cut. When the budget is never depleted, the whole curve is
/// eligible; when even the first point exceeds it, the first averaged
/// point is returned.
pub fn averaged_max_reward(curves: &[Vec<CurvePoint>], budget: u64) -> Result<f64> {
    let len = check_aligned(curves)?;
    if len == 0 {
        return Err(ArsError::Contract("curves are empty".into()));
    }
    let seeds = curves.len() as f64;
    let averaged: Vec<f64> = (0..len)
        .map(|i| curves.iter().map(|c| c[i].eval_reward).sum::<f64>() / seeds)
        .collect();
    let cut = (0..len)
        .find(|&i| curves.iter().map(|c| c[i].timesteps).max().unwrap_or(0) >= budget)
        .unwrap_or(len - 1);
    Ok(averaged[..=cut].iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Percentile by linear interpolation between closest ranks: for `m` sorted
/// values, percentile `q` sits at fractional rank `q/100 * (m - 1)`.
pub fn percentile_interpolated(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=100.0).contains(&q));
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let rank = q / 100.0 * (m - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Per-iteration percentile values across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileTable {
    pub percentiles: Vec<f64>,
    pub iterations: Vec<u64>,
    pub episodes: Vec<u64>,
    pub timesteps: Vec<u64>,
    /// `values[i][j]` is percentile `percentiles[j]` of the rewards at
    /// iteration `iterations[i]`.
    pub values: Vec<Vec<f64>>,
}

/// Percentiles of the reward distribution over seeds, per iteration.
/// Requires at least two aligned curves.
pub fn percentile_report(curves: &[Vec<CurvePoint>], percentiles: &[f64]) -> Result<PercentileTable> {
    if curves.len() < 2 {
        return Err(ArsError::Contract("percentile report needs at least two curves".into()));
    }
    for &q in percentiles {
        if !(0.0..=100.0).contains(&q) {
            return Err(ArsError::Config(format!("percentile {q} outside [0, 100]")));
        }
    }
    let len = check_aligned(curves)?;
    let mut table = PercentileTable {
        percentiles: percentiles.to_vec(),
        iterations: Vec::with_capacity(len),
        episodes: Vec::with_capacity(len),
        timesteps: Vec::with_capacity(len),
        values: Vec::with_capacity(len),
    };
    for i in 0..len {
        let mut rewards: Vec<f64> = curves.iter().map(|c| c[i].eval_reward).collect();
        rewards.sort_by(f64::total_cmp);
        table.iterations.push(curves[0][i].iteration);
        // Episodes/timesteps can differ per seed under early termination;
        // report the per-iteration maximum (the budget actually consumed).
        table.episodes.push(curves.iter().map(|c| c[i].episodes).max().unwrap_or(0));
        table.timesteps.push(curves.iter().map(|c| c[i].timesteps).max().unwrap_or(0));
        table.values.push(percentiles.iter().map(|&q| percentile_interpolated(&rewards, q)).collect());
    }
    Ok(table)
}

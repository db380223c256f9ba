//! Deterministic parallel evaluation of rollout batches.
//!
//! Work items are pre-assigned to workers round-robin by ordinal, each
//! worker holds a private environment instance that is fully re-seeded per
//! item, and results are reduced in item order. The output is therefore a
//! pure function of the batch, independent of worker count and scheduling.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{rollout, subtract_bonus, EnvDef, Environment, RolloutResult};
use crate::error::{ArsError, Result};
use crate::policy::{PolicyParams, RunningStat, Sign};
use crate::rng::NoiseTable;

/// Whether a rollout is a training query (bonus-subtracted reward, states
/// feed the whitening statistics) or an evaluation query (default reward,
/// no statistics).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RolloutMode {
    Train,
    Eval,
}

/// One rollout to perform: a direction ordinal, its noise-table index, the
/// perturbation sign, and the episode seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkItem {
    pub iteration: u64,
    /// Direction ordinal `k` for training items, rollout index for eval.
    pub direction: u64,
    pub table_index: usize,
    pub sign: Sign,
    pub rollout_seed: u64,
    pub mode: RolloutMode,
}

/// Reduced batch results, ordered by item ordinal.
#[derive(Debug)]
pub struct BatchOutput {
    pub results: Vec<RolloutResult>,
    /// Per-item state statistics merged in ascending item order (empty when
    /// state collection is off).
    pub stat_delta: RunningStat,
    pub episodes: u64,
    pub timesteps: u64,
}

/// The rollout oracle: maps a batch of work items to results. Implemented
/// by [`WorkerPool`] for real environments and by scripted oracles in tests.
pub trait RolloutOracle {
    fn evaluate_batch(
        &mut self,
        items: &[WorkItem],
        params: &PolicyParams,
        nu: f64,
        horizon: usize,
        collect_states: bool,
    ) -> Result<BatchOutput>;

    fn state_dim(&self) -> usize;

    fn action_dim(&self) -> usize;
}

struct ItemOutput {
    result: RolloutResult,
    stat: Option<RunningStat>,
}

/// A fixed set of workers, each owning one environment instance, sharing
/// one immutable noise table.
pub struct WorkerPool {
    envs: Vec<Box<dyn Environment>>,
    table: Arc<NoiseTable>,
    bonus: f64,
    state_dim: usize,
    action_dim: usize,
}

impl WorkerPool {
    pub fn new(env: &EnvDef, horizon: usize, workers: usize, table: Arc<NoiseTable>) -> Result<Self> {
        let workers = if workers == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            workers
        };
        let envs: Vec<Box<dyn Environment>> =
            (0..workers).map(|_| env.build(horizon)).collect::<Result<_>>()?;
        let spec = envs[0].spec();
        Ok(Self {
            envs,
            table,
            bonus: env.effective_bonus(),
            state_dim: spec.state_dim,
            action_dim: spec.action_dim,
        })
    }

    pub fn worker_count(&self) -> usize {
        self.envs.len()
    }

    pub fn table(&self) -> &Arc<NoiseTable> {
        &self.table
    }

    fn run_item(
        env: &mut dyn Environment,
        table: &NoiseTable,
        bonus: f64,
        item: &WorkItem,
        params: &PolicyParams,
        nu: f64,
        horizon: usize,
        collect_states: bool,
    ) -> Result<ItemOutput> {
        let delta = match item.sign {
            Sign::Zero => None,
            _ => Some(table.slice_matrix(item.table_index, params.action_dim(), params.state_dim())?),
        };
        let actor = params.actor(delta.as_ref(), nu, item.sign)?;
        let mut stat = (item.mode == RolloutMode::Train && collect_states)
            .then(|| RunningStat::new(params.state_dim()));
        let result = match item.mode {
            RolloutMode::Train => {
                let mut wrapped = subtract_bonus(&mut *env, bonus)?;
                rollout(
                    &mut wrapped,
                    |x| actor.act(x),
                    item.rollout_seed,
                    horizon,
                    false,
                    stat.as_mut(),
                )
            }
            RolloutMode::Eval => {
                rollout(env, |x| actor.act(x), item.rollout_seed, horizon, false, stat.as_mut())
            }
        };
        Ok(ItemOutput { result, stat })
    }
}

impl RolloutOracle for WorkerPool {
    fn evaluate_batch(
        &mut self,
        items: &[WorkItem],
        params: &PolicyParams,
        nu: f64,
        horizon: usize,
        collect_states: bool,
    ) -> Result<BatchOutput> {
        if params.action_dim() != self.action_dim || params.state_dim() != self.state_dim {
            return Err(ArsError::Contract(format!(
                "policy is {}x{} but environment needs {}x{}",
                params.action_dim(),
                params.state_dim(),
                self.action_dim,
                self.state_dim
            )));
        }
        let mut slots: Vec<Option<ItemOutput>> = Vec::with_capacity(items.len());
        slots.resize_with(items.len(), || None);

        let workers = self.envs.len().min(items.len()).max(1);
        if workers <= 1 {
            if let Some(env) = self.envs.first_mut() {
                for (ordinal, item) in items.iter().enumerate() {
                    let out = Self::run_item(
                        env.as_mut(),
                        &self.table,
                        self.bonus,
                        item,
                        params,
                        nu,
                        horizon,
                        collect_states,
                    )
                    .map_err(|e| ArsError::Worker { item: ordinal, message: e.to_string() })?;
                    slots[ordinal] = Some(out);
                }
            }
        } else {
            let table = &self.table;
            let bonus = self.bonus;
            let per_worker: Vec<std::result::Result<Vec<(usize, ItemOutput)>, (usize, String)>> =
                std::thread::scope(|scope| {
                    let handles: Vec<_> = self
                        .envs
                        .iter_mut()
                        .take(workers)
                        .enumerate()
                        .map(|(wi, env)| {
                            scope.spawn(move || {
                                let mut outs = Vec::new();
                                for (ordinal, item) in
                                    items.iter().enumerate().skip(wi).step_by(workers)
                                {
                                    match Self::run_item(
                                        env.as_mut(),
                                        table,
                                        bonus,
                                        item,
                                        params,
                                        nu,
                                        horizon,
                                        collect_states,
                                    ) {
                                        Ok(out) => outs.push((ordinal, out)),
                                        Err(e) => return Err((ordinal, e.to_string())),
                                    }
                                }
                                Ok(outs)
                            })
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| {
                            h.join().unwrap_or_else(|_| {
                                Err((usize::MAX, "worker thread panicked".into()))
                            })
                        })
                        .collect()
                });
            // Surface the failure with the smallest item ordinal so the error
            // is independent of scheduling.
            let mut first_err: Option<(usize, String)> = None;
            for res in per_worker {
                match res {
                    Ok(outs) => {
                        for (ordinal, out) in outs {
                            slots[ordinal] = Some(out);
                        }
                    }
                    Err((ordinal, message)) => {
                        if first_err.as_ref().is_none_or(|(o, _)| ordinal < *o) {
                            first_err = Some((ordinal, message));
                        }
                    }
                }
            }
            if let Some((item, message)) = first_err {
                return Err(ArsError::Worker { item, message });
            }
        }

        let mut results = Vec::with_capacity(items.len());
        let mut stat_delta = RunningStat::new(self.state_dim);
        let mut episodes = 0u64;
        let mut timesteps = 0u64;
        for (ordinal, slot) in slots.into_iter().enumerate() {
            let out = slot.ok_or_else(|| ArsError::Worker {
                item: ordinal,
                message: "item was never executed".into(),
            })?;
            episodes += 1;
            timesteps += out.result.steps_used as u64;
            if let Some(st) = &out.stat {
                stat_delta.merge(st);
            }
            results.push(out.result);
        }
        Ok(BatchOutput { results, stat_delta, episodes, timesteps })
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }
}

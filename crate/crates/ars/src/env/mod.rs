//! The environment contract and the built-in environments.
//!
//! An environment is the rollout oracle: it is reset from a rollout seed,
//! steps under the policy's actions, and reports per-step rewards (always in
//! maximize convention; quadratic costs are negated). One `rollout` call is
//! one episode and is bit-reproducible from its seed.

mod bonus;
mod lqr;
mod point_mass;
mod quadratic;

pub use bonus::{subtract_bonus, BonusSubtracted};
pub use lqr::{lqr_step_reward, LqrEnv, LqrInstance};
pub use point_mass::PointMassEnv;
pub use quadratic::QuadraticEnv;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{ArsError, Result};
use crate::policy::RunningStat;

/// A rollout aborts as diverged once the state norm passes this bound;
/// unbounded blow-up would otherwise poison the reward statistics.
pub const DIVERGENCE_NORM_LIMIT: f64 = 1e10;

/// Static description of an environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    /// Whether episodes can terminate before the horizon.
    pub terminates: bool,
}

/// Outcome of a single environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: DVector<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment: Send {
    fn spec(&self) -> EnvSpec;

    /// Re-seed the episode stream and return the initial state. All episode
    /// randomness (initial state, process noise) comes from this seed.
    fn reset(&mut self, seed: u64) -> DVector<f64>;

    fn step(&mut self, action: &DVector<f64>) -> StepOutcome;
}

impl<E: Environment + ?Sized> Environment for &mut E {
    fn spec(&self) -> EnvSpec {
        (**self).spec()
    }

    fn reset(&mut self, seed: u64) -> DVector<f64> {
        (**self).reset(seed)
    }

    fn step(&mut self, action: &DVector<f64>) -> StepOutcome {
        (**self).step(action)
    }
}

/// One recorded `(state, action, reward)` step.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub state: DVector<f64>,
    pub action: DVector<f64>,
    pub reward: f64,
}

/// Result of one episode.
///
/// For diverged rollouts, `total_reward` additionally charges the remaining
/// `horizon - steps_used` steps at the worst step reward observed so far;
/// the trace holds only the executed steps.
#[derive(Debug, Clone)]
pub struct RolloutResult {
    pub total_reward: f64,
    pub steps_used: usize,
    pub diverged: bool,
    pub trace: Option<Vec<TraceStep>>,
}

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Run one episode of at most `horizon` steps.
///
/// The policy maps states to actions. Identical inputs produce identical
/// results. A non-finite action, state, or reward aborts the episode as
/// diverged, as does the state-norm guard; executed steps still count
/// toward the sample budget. When `stat` is supplied, every state the
/// policy acted on is pushed into it.
pub fn rollout<F>(
    env: &mut dyn Environment,
    mut policy: F,
    seed: u64,
    horizon: usize,
    record_trace: bool,
    mut stat: Option<&mut RunningStat>,
) -> RolloutResult
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let mut x = env.reset(seed);
    let mut trace = record_trace.then(Vec::new);
    let mut total = 0.0;
    let mut steps = 0usize;
    let mut worst: Option<f64> = None;
    let mut diverged = false;

    for _ in 0..horizon {
        if let Some(st) = stat.as_deref_mut() {
            st.push(&x);
        }
        let action = policy(&x);
        if !all_finite(&action) {
            diverged = true;
            break;
        }
        let out = env.step(&action);
        if !out.reward.is_finite() || !all_finite(&out.state) {
            diverged = true;
            break;
        }
        total += out.reward;
        steps += 1;
        worst = Some(worst.map_or(out.reward, |w: f64| w.min(out.reward)));
        if let Some(t) = trace.as_mut() {
            t.push(TraceStep { state: x.clone(), action, reward: out.reward });
        }
        x = out.state;
        if out.done {
            break;
        }
        if x.norm() > DIVERGENCE_NORM_LIMIT {
            diverged = true;
            break;
        }
    }

    if diverged {
        total += worst.unwrap_or(0.0) * (horizon - steps) as f64;
    }

    RolloutResult { total_reward: total, steps_used: steps, diverged, trace }
}

/// Built-in environment names, as they appear in configs and on the CLI.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EnvName {
    /// The 3-state unstable LQR benchmark instance.
    LqrPaper,
    /// Deterministic quadratic toy: reward `-|x|^2`, dynamics `x <- x + u`.
    Quadratic,
    /// Point mass with a per-step survival bonus and position bound.
    PointMass,
    /// Custom LQR instance loaded from a plain-text matrix file.
    LqrFile(PathBuf),
}

impl EnvName {
    pub fn is_lqr(&self) -> bool {
        matches!(self, EnvName::LqrPaper | EnvName::LqrFile(_))
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvName::LqrPaper => f.write_str("lqr-paper"),
            EnvName::Quadratic => f.write_str("quadratic"),
            EnvName::PointMass => f.write_str("point-mass"),
            EnvName::LqrFile(p) => write!(f, "lqr-file:{}", p.display()),
        }
    }
}

impl FromStr for EnvName {
    type Err = ArsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lqr-paper" => Ok(EnvName::LqrPaper),
            "quadratic" => Ok(EnvName::Quadratic),
            "point-mass" => Ok(EnvName::PointMass),
            other => {
                if let Some(path) = other.strip_prefix("lqr-file:") {
                    Ok(EnvName::LqrFile(PathBuf::from(path)))
                } else {
                    Err(ArsError::Config(format!(
                        "unknown environment {other:?}; expected lqr-paper, quadratic, point-mass, or lqr-file:<path>"
                    )))
                }
            }
        }
    }
}

impl Serialize for EnvName {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EnvName {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Environment selection plus the training-time survival-bonus subtraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvDef {
    pub name: EnvName,
    /// Bonus subtracted from every step reward during training rollouts;
    /// evaluation rollouts always see default rewards. `None` uses the
    /// environment's own default (1 for point-mass, 0 elsewhere).
    pub train_bonus: Option<f64>,
}

impl EnvDef {
    pub fn new(name: EnvName) -> Self {
        Self { name, train_bonus: None }
    }

    pub fn effective_bonus(&self) -> f64 {
        self.train_bonus.unwrap_or(match self.name {
            EnvName::PointMass => PointMassEnv::SURVIVAL_BONUS,
            _ => 0.0,
        })
    }

    /// Construct a fresh instance with the given episode horizon.
    /// Construction is pure: equal definitions build identical instances.
    pub fn build(&self, horizon: usize) -> Result<Box<dyn Environment>> {
        if let Some(b) = self.train_bonus {
            if !(b >= 0.0) {
                return Err(ArsError::Config(format!("training bonus must be >= 0, got {b}")));
            }
        }
        Ok(match &self.name {
            EnvName::LqrPaper => Box::new(LqrEnv::new(LqrInstance::benchmark_instance(), horizon)),
            EnvName::Quadratic => Box::new(QuadraticEnv::with_defaults(horizon)),
            EnvName::PointMass => Box::new(PointMassEnv::with_defaults(horizon)),
            EnvName::LqrFile(path) => {
                Box::new(LqrEnv::new(LqrInstance::from_matrix_file(path)?, horizon))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::SeedableRng;

    /// Wrapper that counts oracle queries and consumed timesteps.
    pub struct CountingEnv<E> {
        inner: E,
        pub episodes: u64,
        pub timesteps: u64,
    }

    impl<E: Environment> CountingEnv<E> {
        pub fn new(inner: E) -> Self {
            Self { inner, episodes: 0, timesteps: 0 }
        }
    }

    impl<E: Environment> Environment for CountingEnv<E> {
        fn spec(&self) -> EnvSpec {
            self.inner.spec()
        }

        fn reset(&mut self, seed: u64) -> DVector<f64> {
            self.episodes += 1;
            self.inner.reset(seed)
        }

        fn step(&mut self, action: &DVector<f64>) -> StepOutcome {
            self.timesteps += 1;
            self.inner.step(action)
        }
    }

    #[test]
    fn zero_horizon_episode_is_empty() {
        let mut env = QuadraticEnv::with_defaults(10);
        let r = rollout(&mut env, |x| -x.clone(), 3, 0, true, None);
        assert_eq!(r.total_reward, 0.0);
        assert_eq!(r.steps_used, 0);
        assert!(!r.diverged);
        assert!(r.trace.unwrap().is_empty());
    }

    #[test]
    fn rollout_is_pure_in_seed() {
        let mut env = LqrEnv::new(LqrInstance::benchmark_instance(), 40);
        let k = nalgebra::DMatrix::from_diagonal_element(3, 3, -0.9);
        let run = |env: &mut LqrEnv| rollout(env, |x| &k * x, 1234, 40, true, None);
        let a = run(&mut env);
        let b = run(&mut env);
        assert_eq!(a.total_reward.to_bits(), b.total_reward.to_bits());
        assert_eq!(a.steps_used, b.steps_used);
        let ta = a.trace.unwrap();
        let tb = b.trace.unwrap();
        for (x, y) in ta.iter().zip(tb.iter()) {
            assert_eq!(x.state, y.state);
            assert_eq!(x.action, y.action);
            assert_eq!(x.reward.to_bits(), y.reward.to_bits());
        }
    }

    #[test]
    fn trace_rewards_sum_to_total() {
        let mut env = PointMassEnv::with_defaults(60);
        let mut rng = RngStream::seed_from_u64(5);
        for seed in 0..20 {
            let gain = nalgebra::DMatrix::from_fn(2, 4, |_, _| {
                rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
            });
            let r = rollout(&mut env, |x| &gain * x, seed, 60, true, None);
            if r.diverged {
                continue;
            }
            let sum: f64 = r.trace.as_ref().unwrap().iter().map(|t| t.reward).sum();
            let denom = r.total_reward.abs().max(1.0);
            assert!(((sum - r.total_reward) / denom).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_accounting_counts_every_rollout() {
        let mut env = CountingEnv::new(PointMassEnv::with_defaults(30));
        let mut used = 0u64;
        for seed in 0..10 {
            let r = rollout(&mut env, |_| DVector::zeros(2), seed, 30, false, None);
            used += r.steps_used as u64;
        }
        assert_eq!(env.episodes, 10);
        assert_eq!(env.timesteps, used);
    }

    #[test]
    fn non_finite_action_aborts_as_diverged() {
        let mut env = QuadraticEnv::with_defaults(10);
        let mut calls = 0;
        let r = rollout(
            &mut env,
            |x| {
                calls += 1;
                if calls > 3 {
                    DVector::from_element(x.len(), f64::NAN)
                } else {
                    DVector::zeros(x.len())
                }
            },
            1,
            10,
            false,
            None,
        );
        assert!(r.diverged);
        assert_eq!(r.steps_used, 3);
    }

    #[test]
    fn divergence_guard_fills_remaining_steps_with_worst_reward() {
        // Unstable LQR with a gain that blows the state up quickly.
        let inst = LqrInstance::new(
            nalgebra::DMatrix::from_diagonal_element(1, 1, 3.0),
            nalgebra::DMatrix::identity(1, 1),
            nalgebra::DMatrix::identity(1, 1),
            nalgebra::DMatrix::identity(1, 1),
            0.0,
            1.0,
        )
        .unwrap();
        let mut env = LqrEnv::new(inst, 100);
        let r = rollout(&mut env, |_| DVector::zeros(1), 7, 100, true, None);
        assert!(r.diverged);
        assert!(r.steps_used < 100);
        let trace = r.trace.unwrap();
        let worst = trace.iter().map(|t| t.reward).fold(f64::INFINITY, f64::min);
        let executed: f64 = trace.iter().map(|t| t.reward).sum();
        let expected = executed + worst * (100 - r.steps_used) as f64;
        assert!(((r.total_reward - expected) / expected.abs()).abs() < 1e-12);
    }

    #[test]
    fn rollout_pushes_acted_states_into_stat() {
        let mut env = QuadraticEnv::with_defaults(25);
        let mut stat = RunningStat::new(2);
        let r = rollout(&mut env, |x| -x.clone(), 11, 25, false, Some(&mut stat));
        assert_eq!(stat.count(), r.steps_used as u64);
    }

    #[test]
    fn env_name_round_trips() {
        for name in ["lqr-paper", "quadratic", "point-mass", "lqr-file:some/dir/inst.txt"] {
            let parsed: EnvName = name.parse().unwrap();
            assert_eq!(parsed.to_string(), name);
        }
        assert!("mujoco".parse::<EnvName>().is_err());
    }

    #[test]
    fn default_bonus_per_env() {
        assert_eq!(EnvDef::new(EnvName::PointMass).effective_bonus(), 1.0);
        assert_eq!(EnvDef::new(EnvName::Quadratic).effective_bonus(), 0.0);
        assert_eq!(EnvDef::new(EnvName::LqrPaper).effective_bonus(), 0.0);
        let custom = EnvDef { name: EnvName::PointMass, train_bonus: Some(0.0) };
        assert_eq!(custom.effective_bonus(), 0.0);
    }
}

//! Training-time survival-bonus subtraction.
//!
//! Survival bonuses reward standing still and trap deterministic policies in
//! a local optimum, so training rollouts see `reward - bonus` per step.
//! Evaluation rollouts bypass the wrapper and use default rewards.

use nalgebra::DVector;

use crate::error::{ArsError, Result};

use super::{EnvSpec, Environment, StepOutcome};

pub struct BonusSubtracted<E> {
    inner: E,
    bonus: f64,
}

/// Wrap `env` so each step reward is reduced by `bonus`.
pub fn subtract_bonus<E: Environment>(env: E, bonus: f64) -> Result<BonusSubtracted<E>> {
    if !(bonus >= 0.0) {
        return Err(ArsError::Config(format!("bonus must be >= 0, got {bonus}")));
    }
    Ok(BonusSubtracted { inner: env, bonus })
}

impl<E> BonusSubtracted<E> {
    pub fn bonus(&self) -> f64 {
        self.bonus
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut E {
        &mut self.inner
    }

    pub fn into_inner(self) -> E {
        self.inner
    }
}

impl<E: Environment> Environment for BonusSubtracted<E> {
    fn spec(&self) -> EnvSpec {
        self.inner.spec()
    }

    fn reset(&mut self, seed: u64) -> DVector<f64> {
        self.inner.reset(seed)
    }

    fn step(&mut self, action: &DVector<f64>) -> StepOutcome {
        let mut out = self.inner.step(action);
        out.reward -= self.bonus;
        out
    }
}

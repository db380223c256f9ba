//! Deterministic quadratic toy environment.
//!
//! Reward `-|x|^2` on the pre-action state, dynamics `x <- x + B u`. With
//! `B = I` the optimal one-step action is `u = -x`, after which every later
//! reward is exactly zero. The only randomness is the seeded initial state.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ArsError, Result};
use crate::rng::RngStream;

use super::{EnvSpec, Environment, StepOutcome};

pub struct QuadraticEnv {
    input: DMatrix<f64>,
    x0_std: f64,
    horizon: usize,
    state: DVector<f64>,
}

impl QuadraticEnv {
    pub const DEFAULT_STATE_DIM: usize = 2;
    pub const DEFAULT_X0_STD: f64 = 0.05;

    /// `input` maps actions into state space (n x p); identity when `None`
    /// (requires `action_dim == state_dim`).
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        input: Option<DMatrix<f64>>,
        x0_std: f64,
        horizon: usize,
    ) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 {
            return Err(ArsError::Config("dimensions must be positive".into()));
        }
        let input = match input {
            Some(m) => {
                if m.shape() != (state_dim, action_dim) {
                    return Err(ArsError::Config(format!(
                        "input matrix must be {state_dim}x{action_dim}, got {:?}",
                        m.shape()
                    )));
                }
                m
            }
            None => {
                if state_dim != action_dim {
                    return Err(ArsError::Config(
                        "an explicit input matrix is required when action_dim != state_dim".into(),
                    ));
                }
                DMatrix::identity(state_dim, state_dim)
            }
        };
        if !(x0_std >= 0.0) {
            return Err(ArsError::Config("x0_std must be >= 0".into()));
        }
        Ok(Self { input, x0_std, horizon, state: DVector::zeros(state_dim) })
    }

    pub fn with_defaults(horizon: usize) -> Self {
        Self::new(
            Self::DEFAULT_STATE_DIM,
            Self::DEFAULT_STATE_DIM,
            None,
            Self::DEFAULT_X0_STD,
            horizon,
        )
        .expect("defaults are valid")
    }
}

impl Environment for QuadraticEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: self.input.nrows(),
            action_dim: self.input.ncols(),
            horizon: self.horizon,
            terminates: false,
        }
    }

    fn reset(&mut self, seed: u64) -> DVector<f64> {
        let mut rng = RngStream::seed_from_u64(seed);
        self.state =
            DVector::from_fn(self.input.nrows(), |_, _| StandardNormal.sample(&mut rng)) * self.x0_std;
        self.state.clone()
    }

    fn step(&mut self, action: &DVector<f64>) -> StepOutcome {
        let reward = -self.state.norm_squared();
        self.state += &self.input * action;
        StepOutcome { state: self.state.clone(), reward, done: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::rollout;

    #[test]
    fn zero_policy_total_is_horizon_times_x0_norm() {
        let mut env = QuadraticEnv::with_defaults(10);
        let r = rollout(&mut env, |x| DVector::zeros(x.len()), 3, 10, true, None);
        let x0 = env.reset(3);
        let expected = -10.0 * x0.norm_squared();
        assert!(((r.total_reward - expected) / expected).abs() < 1e-12);
        // Trajectory is deterministic: the state never moves.
        for step in r.trace.unwrap() {
            assert_eq!(step.state, x0);
        }
    }

    #[test]
    fn negating_action_cancels_after_first_step() {
        let mut env = QuadraticEnv::with_defaults(8);
        let r = rollout(&mut env, |x| -x.clone(), 9, 8, true, None);
        let trace = r.trace.unwrap();
        assert!(trace[0].reward < 0.0);
        for step in &trace[1..] {
            assert_eq!(step.reward, 0.0);
        }
    }

    #[test]
    fn explicit_input_matrix_shapes_validated() {
        assert!(QuadraticEnv::new(3, 2, None, 0.1, 10).is_err());
        assert!(QuadraticEnv::new(3, 2, Some(DMatrix::zeros(3, 3)), 0.1, 10).is_err());
        assert!(QuadraticEnv::new(3, 2, Some(DMatrix::zeros(3, 2)), 0.1, 10).is_ok());
    }
}

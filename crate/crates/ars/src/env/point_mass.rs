//! Planar point mass with a survival bonus.
//!
//! State `(px, py, vx, vy)`, action `(ax, ay)`. Forward-Euler integration;
//! the episode terminates once either position coordinate leaves the bound.
//! Every executed step earns a +1 survival bonus minus a small position
//! penalty, so staying alive near the origin is the objective.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::rng::RngStream;

use super::{EnvSpec, Environment, StepOutcome};

pub struct PointMassEnv {
    bound: f64,
    dt: f64,
    x0_pos_std: f64,
    x0_vel_std: f64,
    pos_penalty: f64,
    horizon: usize,
    state: DVector<f64>,
}

impl PointMassEnv {
    /// Per-step survival bonus baked into the default reward; training
    /// subtracts it through the bonus wrapper.
    pub const SURVIVAL_BONUS: f64 = 1.0;

    pub const DEFAULT_BOUND: f64 = 2.0;
    pub const DEFAULT_DT: f64 = 0.1;
    pub const DEFAULT_X0_POS_STD: f64 = 0.3;
    pub const DEFAULT_X0_VEL_STD: f64 = 0.3;
    pub const DEFAULT_POS_PENALTY: f64 = 0.05;

    pub fn new(
        bound: f64,
        dt: f64,
        x0_pos_std: f64,
        x0_vel_std: f64,
        pos_penalty: f64,
        horizon: usize,
    ) -> Self {
        Self { bound, dt, x0_pos_std, x0_vel_std, pos_penalty, horizon, state: DVector::zeros(4) }
    }

    pub fn with_defaults(horizon: usize) -> Self {
        Self::new(
            Self::DEFAULT_BOUND,
            Self::DEFAULT_DT,
            Self::DEFAULT_X0_POS_STD,
            Self::DEFAULT_X0_VEL_STD,
            Self::DEFAULT_POS_PENALTY,
            horizon,
        )
    }

    /// Variant starting exactly at rest at the origin.
    pub fn at_rest(horizon: usize) -> Self {
        Self::new(
            Self::DEFAULT_BOUND,
            Self::DEFAULT_DT,
            0.0,
            0.0,
            Self::DEFAULT_POS_PENALTY,
            horizon,
        )
    }
}

impl Environment for PointMassEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec { state_dim: 4, action_dim: 2, horizon: self.horizon, terminates: true }
    }

    fn reset(&mut self, seed: u64) -> DVector<f64> {
        let mut rng = RngStream::seed_from_u64(seed);
        let mut draw = |std: f64| -> f64 {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * std
        };
        self.state = DVector::from_row_slice(&[
            draw(self.x0_pos_std),
            draw(self.x0_pos_std),
            draw(self.x0_vel_std),
            draw(self.x0_vel_std),
        ]);
        self.state.clone()
    }

    fn step(&mut self, action: &DVector<f64>) -> StepOutcome {
        let (px, py, vx, vy) = (self.state[0], self.state[1], self.state[2], self.state[3]);
        let nvx = vx + self.dt * action[0];
        let nvy = vy + self.dt * action[1];
        let npx = px + self.dt * nvx;
        let npy = py + self.dt * nvy;
        self.state = DVector::from_row_slice(&[npx, npy, nvx, nvy]);
        let reward = Self::SURVIVAL_BONUS - self.pos_penalty * (npx * npx + npy * npy);
        let done = npx.abs() > self.bound || npy.abs() > self.bound;
        StepOutcome { state: self.state.clone(), reward, done }
    }
}

//! Named hyperparameter grids for the six standard locomotion tasks.
//!
//! The simulator behind these tasks is proprietary and not bundled, so the
//! grids ship as presets for users who plug in their own environment; they
//! also drive desk-scale sweeps on the built-in environments.

use serde::Serialize;

/// One named grid over `(alpha, nu, N, b)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPreset {
    pub name: &'static str,
    pub alphas: &'static [f64],
    pub nus: &'static [f64],
    pub num_directions: &'static [usize],
    pub top_bs: &'static [usize],
}

pub const GRID_PRESETS: &[GridPreset] = &[
    GridPreset {
        name: "swimmer-v1",
        alphas: &[0.01, 0.02, 0.025],
        nus: &[0.03, 0.02, 0.01],
        num_directions: &[1],
        top_bs: &[1],
    },
    GridPreset {
        name: "hopper-v1",
        alphas: &[0.01, 0.02, 0.025],
        nus: &[0.03, 0.025, 0.02, 0.01],
        num_directions: &[8, 16, 32],
        top_bs: &[4, 8, 32],
    },
    GridPreset {
        name: "halfcheetah-v1",
        alphas: &[0.01, 0.02, 0.025],
        nus: &[0.025, 0.02, 0.01],
        num_directions: &[4, 8, 16, 32],
        top_bs: &[2, 4, 8, 32],
    },
    GridPreset {
        name: "walker2d-v1",
        alphas: &[0.01, 0.02, 0.025, 0.03],
        nus: &[0.025, 0.02, 0.01, 0.0075],
        num_directions: &[40, 60, 80, 100],
        top_bs: &[15, 30, 100],
    },
    GridPreset {
        name: "ant-v1",
        alphas: &[0.01, 0.015, 0.02, 0.025],
        nus: &[0.025, 0.02, 0.01],
        num_directions: &[20, 40, 60, 80],
        top_bs: &[15, 20, 40, 80],
    },
    GridPreset {
        name: "humanoid-v1",
        alphas: &[0.01, 0.02, 0.025],
        nus: &[0.01, 0.0075],
        num_directions: &[90, 230, 270, 310, 350],
        top_bs: &[100, 200, 360],
    },
];

pub fn grid_preset(name: &str) -> Option<&'static GridPreset> {
    GRID_PRESETS.iter().find(|p| p.name.eq_ignore_ascii_case(name))
}

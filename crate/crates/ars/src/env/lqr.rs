//! Discrete-time linear-quadratic regulator environment.
//!
//! Dynamics `x_{t+1} = A x_t + B u_t + w_t` with i.i.d. Gaussian process
//! noise, quadratic step cost `x'Qx + u'Ru` reported as a negated reward so
//! maximizing reward minimizes cost.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ArsError, Result};
use crate::rng::RngStream;

use super::{EnvSpec, Environment, StepOutcome};

/// Eigenvalue floors used to validate `Q` (PSD) and `R` (PD) at construction.
const PSD_FLOOR: f64 = -1e-10;
const PD_FLOOR: f64 = 1e-10;

/// Problem data for one LQR instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrInstance {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    noise_std: f64,
    x0_std: f64,
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let scale = m.norm().max(1.0);
    if (m - m.transpose()).norm() > 1e-12 * scale {
        return Err(ArsError::Config(format!("{name} must be symmetric")));
    }
    Ok(())
}

impl LqrInstance {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        noise_std: f64,
        x0_std: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        let p = b.ncols();
        if a.ncols() != n {
            return Err(ArsError::Config("A must be square".into()));
        }
        if b.nrows() != n {
            return Err(ArsError::Config(format!("B must have {n} rows")));
        }
        if q.shape() != (n, n) {
            return Err(ArsError::Config(format!("Q must be {n}x{n}")));
        }
        if r.shape() != (p, p) {
            return Err(ArsError::Config(format!("R must be {p}x{p}")));
        }
        check_symmetric(&q, "Q")?;
        check_symmetric(&r, "R")?;
        let q_min = q.clone().symmetric_eigen().eigenvalues.min();
        if q_min < PSD_FLOOR {
            return Err(ArsError::Config(format!(
                "Q must be positive semidefinite (minimum eigenvalue {q_min})"
            )));
        }
        let r_min = r.clone().symmetric_eigen().eigenvalues.min();
        if r_min < PD_FLOOR {
            return Err(ArsError::Config(format!(
                "R must be positive definite (minimum eigenvalue {r_min})"
            )));
        }
        if !(noise_std >= 0.0) || !(x0_std >= 0.0) {
            return Err(ArsError::Config("noise_std and x0_std must be >= 0".into()));
        }
        Ok(Self { a, b, q, r, noise_std, x0_std })
    }

    /// The standard 3-state benchmark instance: a marginally unstable sparse
    /// `A` (spectral radius ~1.0241), identity input, cheap state cost, and
    /// expensive control.
    pub fn benchmark_instance() -> Self {
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[1.01, 0.01, 0.0, 0.01, 1.01, 0.01, 0.0, 0.01, 1.01],
        );
        let b = DMatrix::identity(3, 3);
        let q = DMatrix::identity(3, 3) * 1e-3;
        let r = DMatrix::identity(3, 3);
        Self::new(a, b, q, r, 1.0, 1.0).expect("benchmark instance is valid")
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn x0_std(&self) -> f64 {
        self.x0_std
    }

    pub fn with_noise(&self, noise_std: f64, x0_std: f64) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.q.clone(), self.r.clone(), noise_std, x0_std)
    }

    /// Load an instance from a plain-text matrix file.
    ///
    /// Format (whitespace separated, `#` starts a comment line):
    /// a `n p` header, then the rows of `A` (n x n), `B` (n x p), `Q` (n x n)
    /// and `R` (p x p) in row-major order, then `noise_std x0_std`.
    pub fn from_matrix_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut tokens = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .flat_map(|l| l.split_whitespace());
        let mut next_usize = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| ArsError::Parse(format!("missing {what}")))?
                .parse()
                .map_err(|e| ArsError::Parse(format!("bad {what}: {e}")))
        };
        let n = next_usize("state dimension")?;
        let p = next_usize("action dimension")?;
        if n == 0 || p == 0 {
            return Err(ArsError::Parse("dimensions must be positive".into()));
        }
        let mut next_f64 = |what: &str| -> Result<f64> {
            tokens
                .next()
                .ok_or_else(|| ArsError::Parse(format!("missing {what}")))?
                .parse()
                .map_err(|e| ArsError::Parse(format!("bad {what}: {e}")))
        };
        let mut read_matrix = |rows: usize, cols: usize, name: &str| -> Result<DMatrix<f64>> {
            let mut vals = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                vals.push(next_f64(name)?);
            }
            Ok(DMatrix::from_row_slice(rows, cols, &vals))
        };
        let a = read_matrix(n, n, "A entry")?;
        let b = read_matrix(n, p, "B entry")?;
        let q = read_matrix(n, n, "Q entry")?;
        let r = read_matrix(p, p, "R entry")?;
        let noise_std = next_f64("noise_std")?;
        let x0_std = next_f64("x0_std")?;
        Self::new(a, b, q, r, noise_std, x0_std)
    }

    /// Write the instance in the same format `from_matrix_file` reads.
    pub fn write_matrix_file(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let fmt_matrix = |m: &DMatrix<f64>, out: &mut String| {
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        };
        out.push_str(&format!("{} {}\n", self.state_dim(), self.action_dim()));
        fmt_matrix(&self.a, &mut out);
        fmt_matrix(&self.b, &mut out);
        fmt_matrix(&self.q, &mut out);
        fmt_matrix(&self.r, &mut out);
        out.push_str(&format!("{} {}\n", self.noise_std, self.x0_std));
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Negated quadratic step cost: `-(x'Qx + u'Ru)`.
pub fn lqr_step_reward(x: &DVector<f64>, u: &DVector<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    -(x.dot(&(q * x)) + u.dot(&(r * u)))
}

pub struct LqrEnv {
    inst: LqrInstance,
    horizon: usize,
    state: DVector<f64>,
    rng: RngStream,
}

impl LqrEnv {
    pub fn new(inst: LqrInstance, horizon: usize) -> Self {
        let n = inst.state_dim();
        Self { inst, horizon, state: DVector::zeros(n), rng: RngStream::seed_from_u64(0) }
    }

    pub fn instance(&self) -> &LqrInstance {
        &self.inst
    }

    fn normal_vec(&mut self, dim: usize) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut self.rng))
    }
}

impl Environment for LqrEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: self.inst.state_dim(),
            action_dim: self.inst.action_dim(),
            horizon: self.horizon,
            terminates: false,
        }
    }

    fn reset(&mut self, seed: u64) -> DVector<f64> {
        self.rng = RngStream::seed_from_u64(seed);
        let n = self.inst.state_dim();
        self.state = self.normal_vec(n) * self.inst.x0_std;
        self.state.clone()
    }

    fn step(&mut self, action: &DVector<f64>) -> StepOutcome {
        let reward = lqr_step_reward(&self.state, action, &self.inst.q, &self.inst.r);
        let mut next = &self.inst.a * &self.state + &self.inst.b * action;
        if self.inst.noise_std > 0.0 {
            let n = self.inst.state_dim();
            next += self.normal_vec(n) * self.inst.noise_std;
        }
        self.state = next;
        StepOutcome { state: self.state.clone(), reward, done: false }
    }
}

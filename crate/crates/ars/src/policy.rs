//! Linear policy evaluation with optional online state whitening, and the
//! running statistics the whitened variants maintain.
//!
//! A policy is an action matrix `M` (p x n) together with whitening
//! statistics `(mu, sigma_diag)`. V1 variants act as `(M +/- nu*delta) x`;
//! V2 variants act on the whitened state `diag(Sigma)^(-1/2) (x - mu)`,
//! coordinate-wise, keeping only the diagonal of the covariance. A
//! coordinate whose variance falls below [`SIGMA_FLOOR`] contributes zero to
//! the action (the 0/0-as-0 rule, equivalent to sending that variance to
//! infinity).

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ArsError, Result};

/// Variance floor below which a whitened coordinate is treated as constant
/// and contributes zero to the action.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Algorithm variant tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArsVersion {
    V1,
    V1T,
    V2,
    V2T,
}

impl ArsVersion {
    /// Whether states are whitened by online mean/variance estimates.
    pub fn whitens(self) -> bool {
        matches!(self, ArsVersion::V2 | ArsVersion::V2T)
    }

    /// Whether `b < N` top-direction selection is allowed.
    pub fn allows_partial_top(self) -> bool {
        matches!(self, ArsVersion::V1T | ArsVersion::V2T)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArsVersion::V1 => "v1",
            ArsVersion::V1T => "v1-t",
            ArsVersion::V2 => "v2",
            ArsVersion::V2T => "v2-t",
        }
    }

    pub const ALL: [ArsVersion; 4] = [ArsVersion::V1, ArsVersion::V1T, ArsVersion::V2, ArsVersion::V2T];
}

impl fmt::Display for ArsVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArsVersion {
    type Err = ArsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "v1" => Ok(ArsVersion::V1),
            "v1-t" | "v1t" => Ok(ArsVersion::V1T),
            "v2" => Ok(ArsVersion::V2),
            "v2-t" | "v2t" => Ok(ArsVersion::V2T),
            other => Err(ArsError::Config(format!(
                "unknown version {other:?}; expected one of v1, v1-t, v2, v2-t"
            ))),
        }
    }
}

/// Perturbation sign: `Plus`/`Minus` select the antithetic pair, `Zero`
/// means the unperturbed policy (evaluation rollouts).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
    Zero,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
            Sign::Zero => 0.0,
        }
    }
}

/// Linear policy parameters: gain matrix plus frozen whitening statistics.
///
/// For V1 variants `mu` is identically zero and `sigma_diag` identically
/// one, so whitening is inert.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    version: ArsVersion,
    gain: DMatrix<f64>,
    mu: DVector<f64>,
    sigma_diag: DVector<f64>,
}

impl PolicyParams {
    /// The all-zero initial policy with inert whitening.
    pub fn zeros(version: ArsVersion, action_dim: usize, state_dim: usize) -> Self {
        Self {
            version,
            gain: DMatrix::zeros(action_dim, state_dim),
            mu: DVector::zeros(state_dim),
            sigma_diag: DVector::from_element(state_dim, 1.0),
        }
    }

    pub fn new(
        version: ArsVersion,
        gain: DMatrix<f64>,
        mu: DVector<f64>,
        sigma_diag: DVector<f64>,
    ) -> Result<Self> {
        if mu.len() != gain.ncols() || sigma_diag.len() != gain.ncols() {
            return Err(ArsError::Contract(format!(
                "whitening statistics of length {}/{} do not match state dimension {}",
                mu.len(),
                sigma_diag.len(),
                gain.ncols()
            )));
        }
        if sigma_diag.iter().any(|&s| s < 0.0) {
            return Err(ArsError::Contract("sigma_diag entries must be nonnegative".into()));
        }
        if !version.whitens() && (mu.iter().any(|&m| m != 0.0) || sigma_diag.iter().any(|&s| s != 1.0))
        {
            return Err(ArsError::Contract(
                "V1 policies must carry inert whitening statistics (mu = 0, sigma = 1)".into(),
            ));
        }
        Ok(Self { version, gain, mu, sigma_diag })
    }

    pub fn version(&self) -> ArsVersion {
        self.version
    }

    pub fn action_dim(&self) -> usize {
        self.gain.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.gain.ncols()
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma_diag(&self) -> &DVector<f64> {
        &self.sigma_diag
    }

    /// Replace the gain, keeping version and statistics.
    pub fn with_gain(&self, gain: DMatrix<f64>) -> Self {
        Self { gain, ..self.clone() }
    }

    /// Replace the frozen whitening statistics. No-op statistics are forced
    /// for non-whitening versions.
    pub fn with_stats(&self, mu: DVector<f64>, sigma_diag: DVector<f64>) -> Self {
        if self.version.whitens() {
            Self { mu, sigma_diag, ..self.clone() }
        } else {
            self.clone()
        }
    }

    /// Bind a perturbation into a concrete actor: the effective gain is
    /// `M + sign * nu * delta`.
    pub fn actor(&self, delta: Option<&DMatrix<f64>>, nu: f64, sign: Sign) -> Result<LinearActor> {
        let effective = match (sign, delta) {
            (Sign::Zero, _) | (_, None) => self.gain.clone(),
            (_, Some(d)) => {
                if d.shape() != self.gain.shape() {
                    return Err(ArsError::Contract(format!(
                        "perturbation shape {:?} does not match gain shape {:?}",
                        d.shape(),
                        self.gain.shape()
                    )));
                }
                &self.gain + d * (sign.factor() * nu)
            }
        };
        Ok(LinearActor {
            gain: effective,
            mu: self.mu.clone(),
            sigma_diag: self.sigma_diag.clone(),
            whitens: self.version.whitens(),
        })
    }

    /// Evaluate the policy at `x` with an optional perturbation.
    pub fn act(
        &self,
        delta: Option<&DMatrix<f64>>,
        nu: f64,
        sign: Sign,
        x: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if x.len() != self.state_dim() {
            return Err(ArsError::Contract(format!(
                "state of length {} does not match state dimension {}",
                x.len(),
                self.state_dim()
            )));
        }
        Ok(self.actor(delta, nu, sign)?.act(x))
    }

    /// Write the checkpoint to a writer. Plain text, one value per token,
    /// using shortest-round-trip float formatting so the file reloads
    /// bit-exactly.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "ars-policy-v1")?;
        writeln!(w, "version {}", self.version)?;
        writeln!(w, "dims {} {}", self.action_dim(), self.state_dim())?;
        writeln!(w, "gain")?;
        for i in 0..self.gain.nrows() {
            let row: Vec<String> = (0..self.gain.ncols()).map(|j| self.gain[(i, j)].to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        writeln!(w, "mu")?;
        let mu: Vec<String> = self.mu.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", mu.join(" "))?;
        writeln!(w, "sigma")?;
        let sg: Vec<String> = self.sigma_diag.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", sg.join(" "))?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| ArsError::Parse("unexpected end of policy checkpoint".into()))
        };
        let header = next()?;
        if header.trim() != "ars-policy-v1" {
            return Err(ArsError::Parse(format!("unknown checkpoint header {header:?}")));
        }
        let vline = next()?;
        let version: ArsVersion = vline
            .strip_prefix("version ")
            .ok_or_else(|| ArsError::Parse("expected 'version <tag>'".into()))?
            .trim()
            .parse()?;
        let dline = next()?;
        let dims: Vec<usize> = dline
            .strip_prefix("dims ")
            .ok_or_else(|| ArsError::Parse("expected 'dims <p> <n>'".into()))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| ArsError::Parse(format!("bad dimension {t:?}: {e}"))))
            .collect::<Result<_>>()?;
        let [p, n] = dims[..] else {
            return Err(ArsError::Parse("expected exactly two dimensions".into()));
        };
        let parse_row = |line: &str, want: usize| -> Result<Vec<f64>> {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|e| ArsError::Parse(format!("bad float {t:?}: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != want {
                return Err(ArsError::Parse(format!("expected {want} values, found {}", vals.len())));
            }
            Ok(vals)
        };
        let expect_tag = |line: String, tag: &str| -> Result<()> {
            if line.trim() == tag {
                Ok(())
            } else {
                Err(ArsError::Parse(format!("expected section {tag:?}, found {line:?}")))
            }
        };
        expect_tag(next()?, "gain")?;
        let mut gain = DMatrix::zeros(p, n);
        for i in 0..p {
            let row = parse_row(&next()?, n)?;
            for (j, v) in row.into_iter().enumerate() {
                gain[(i, j)] = v;
            }
        }
        expect_tag(next()?, "mu")?;
        let mu = DVector::from_vec(parse_row(&next()?, n)?);
        expect_tag(next()?, "sigma")?;
        let sigma = DVector::from_vec(parse_row(&next()?, n)?);
        Self::new(version, gain, mu, sigma)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read(path)?;
        Self::read_from(std::io::BufReader::new(data.as_slice()))
    }
}

/// A policy with its perturbation already bound, ready to map states to
/// actions inside a rollout.
#[derive(Debug, Clone)]
pub struct LinearActor {
    gain: DMatrix<f64>,
    mu: DVector<f64>,
    sigma_diag: DVector<f64>,
    whitens: bool,
}

impl LinearActor {
    pub fn act(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.gain.ncols());
        if self.whitens {
            let w = DVector::from_fn(x.len(), |i, _| {
                let s = self.sigma_diag[i];
                if s < SIGMA_FLOOR {
                    0.0
                } else {
                    (x[i] - self.mu[i]) / s.sqrt()
                }
            });
            &self.gain * w
        } else {
            &self.gain * x
        }
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }
}

/// One-pass per-coordinate mean/variance accumulator (Welford), mergeable
/// across disjoint batches for the parallel executor.
///
/// Variance is the population form (divide by count). `freeze` on an empty
/// accumulator yields inert whitening statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStat {
    count: u64,
    mean: DVector<f64>,
    m2: DVector<f64>,
}

impl RunningStat {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, mean: DVector::zeros(dim), m2: DVector::zeros(dim) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, x: &DVector<f64>) {
        debug_assert_eq!(x.len(), self.mean.len());
        self.count += 1;
        let c = self.count as f64;
        for i in 0..self.mean.len() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / c;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }

    /// Merge another accumulator built from a disjoint batch of states.
    pub fn merge(&mut self, other: &RunningStat) {
        debug_assert_eq!(self.dim(), other.dim());
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * (nb / n);
            self.m2[i] += other.m2[i] + delta * delta * (na * nb / n);
        }
        self.count += other.count;
    }

    pub fn mean(&self) -> DVector<f64> {
        self.mean.clone()
    }

    /// Population variance per coordinate; zeros before any data.
    pub fn variance(&self) -> DVector<f64> {
        if self.count == 0 {
            return DVector::zeros(self.dim());
        }
        self.m2.map(|v| v / self.count as f64)
    }

    /// Current `(mu, sigma_diag)`. An empty accumulator returns
    /// `(0, 1)` so whitening stays inert before any data arrives.
    pub fn freeze(&self) -> (DVector<f64>, DVector<f64>) {
        if self.count == 0 {
            return (DVector::zeros(self.dim()), DVector::from_element(self.dim(), 1.0));
        }
        (self.mean(), self.variance())
    }
}

//! Deterministic random-number infrastructure.
//!
//! Everything random in a run derives from one master seed. The
//! [`SeedHierarchy`] maps `(master_seed, stream label)` to independent
//! substreams via a splitmix64 chain, so no stream's contents depend on how
//! often any other stream was consumed. Evaluation-rollout seeds live in
//! their own label domain and never overlap the training domains.
//!
//! Perturbation directions are slices of a [`NoiseTable`], a fixed block of
//! standard-normal values filled once per run. Workers address the table by
//! start index instead of exchanging matrices. Standard normals come from
//! `rand_distr::StandardNormal` (the ziggurat algorithm) driven by ChaCha8;
//! both crates are pinned to exact versions so tables are bit-identical
//! across builds and machines.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ArsError, Result};

/// The PRNG stream type used everywhere in the crate.
pub type RngStream = ChaCha8Rng;

/// Default length of the shared noise table (2.5e7 entries). Large enough
/// that overlapping slices are rare for every configured `(N, p, n)`;
/// overlaps are permitted when they do occur.
pub const DEFAULT_NOISE_TABLE_LEN: usize = 25_000_000;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

const DOMAIN_NOISE_FILL: u64 = 1;
const DOMAIN_DIRECTIONS: u64 = 2;
const DOMAIN_ENV_INSTANCE: u64 = 3;
const DOMAIN_TRAIN_ROLLOUT: u64 = 4;
const DOMAIN_EVAL_ROLLOUT: u64 = 5;

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Chain a master seed with label words into one derived seed.
fn derive(master: u64, words: &[u64]) -> u64 {
    let mut h = mix64(master ^ GOLDEN_GAMMA);
    for &w in words {
        h = mix64(h.wrapping_add(GOLDEN_GAMMA).wrapping_add(w));
    }
    h
}

/// Pure mapping from a master seed to every derived stream a run uses.
///
/// Two hierarchies with equal master seeds produce identical streams, and
/// each stream is a function of `(master_seed, label)` alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedHierarchy {
    master: u64,
}

impl SeedHierarchy {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Seed for filling the shared noise table.
    pub fn noise_fill_seed(&self) -> u64 {
        derive(self.master, &[DOMAIN_NOISE_FILL])
    }

    /// Stream that draws per-iteration direction indices. One stream per
    /// run; each iteration consumes the next `N` draws.
    pub fn direction_stream(&self) -> RngStream {
        RngStream::seed_from_u64(derive(self.master, &[DOMAIN_DIRECTIONS]))
    }

    /// Seed for a worker-held environment instance.
    pub fn env_instance_seed(&self, worker: u64) -> u64 {
        derive(self.master, &[DOMAIN_ENV_INSTANCE, worker])
    }

    /// Seed for the training rollout of direction `direction` with the given
    /// sign at iteration `iteration`.
    pub fn train_rollout_seed(&self, iteration: u64, direction: u64, sign: crate::policy::Sign) -> u64 {
        let sign_word = match sign {
            crate::policy::Sign::Plus => 1,
            crate::policy::Sign::Minus => 2,
            crate::policy::Sign::Zero => 3,
        };
        derive(self.master, &[DOMAIN_TRAIN_ROLLOUT, iteration, direction, sign_word])
    }

    /// Seed for evaluation rollout `rollout` at iteration `iteration`.
    /// Disjoint from every training stream: nothing produced during
    /// evaluation feeds back into training.
    pub fn eval_rollout_seed(&self, iteration: u64, rollout: u64) -> u64 {
        derive(self.master, &[DOMAIN_EVAL_ROLLOUT, iteration, rollout])
    }
}

/// Immutable block of i.i.d. standard-normal values, shared across workers.
///
/// A perturbation of dimension `d` is the contiguous slice `[i, i + d)`;
/// matrices are laid out row-major. Contents depend only on
/// `(fill_seed, len)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTable {
    values: Vec<f64>,
    fill_seed: u64,
}

impl NoiseTable {
    pub fn build(fill_seed: u64, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(ArsError::Config("noise table length must be positive".into()));
        }
        let mut rng = RngStream::seed_from_u64(fill_seed);
        let values = (0..length).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(Self { values, fill_seed })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn fill_seed(&self) -> u64 {
        self.fill_seed
    }

    /// Draw a uniformly distributed valid start index for a perturbation of
    /// `dim` entries. Advancing `stream` is the only side effect.
    pub fn draw_index<R: Rng>(&self, stream: &mut R, dim: usize) -> Result<usize> {
        if dim == 0 {
            return Err(ArsError::Config("perturbation dimension must be positive".into()));
        }
        if dim > self.values.len() {
            return Err(ArsError::Config(format!(
                "perturbation dimension {dim} exceeds table length {}",
                self.values.len()
            )));
        }
        Ok(stream.random_range(0..=(self.values.len() - dim)))
    }

    /// The raw slice `[index, index + dim)`.
    pub fn slice(&self, index: usize, dim: usize) -> Result<&[f64]> {
        let end = index.checked_add(dim).ok_or_else(|| {
            ArsError::Config(format!("slice [{index}, {index}+{dim}) overflows"))
        })?;
        if end > self.values.len() {
            return Err(ArsError::Config(format!(
                "slice [{index}, {end}) out of range for table length {}",
                self.values.len()
            )));
        }
        Ok(&self.values[index..end])
    }

    /// Materialize the `rows x cols` perturbation starting at `index`,
    /// filled row-major.
    pub fn slice_matrix(&self, index: usize, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let s = self.slice(index, rows * cols)?;
        Ok(DMatrix::from_row_slice(rows, cols, s))
    }
}

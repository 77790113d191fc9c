//! Robust learning of a discrete distribution on `[n]` from `m` batches of
//! `k` samples each, when up to an `eps` fraction of the batches is
//! adversarial and the remaining "good" batches are drawn i.i.d. from
//! distributions within total variation `eta` of the target.
//!
//! The crate provides:
//!
//! - exact arithmetic for probability vectors, tensor powers, marginals,
//!   slices, binomials and total variation distance ([`dist`], [`tensor`]);
//! - a self-contained dense two-phase simplex solver for LP feasibility and
//!   optimization ([`lp`]);
//! - batch generation: eta-perturbed good batches, adaptive adversaries, and
//!   an exactly indistinguishable pair of contaminated instances that
//!   certifies the information-theoretic error floor ([`adversary`]);
//! - two estimators: subset-mass estimation via binomial-mixture LP
//!   feasibility plus a consistency LP ([`subset_lp`]), and recursive
//!   candidate enumeration with a best rank-1 tensor fit in elementwise
//!   l1 ([`dist_set`]);
//! - numeric verification of the technical inequalities the error analysis
//!   rests on ([`verify`]);
//! - an experiment harness with seeded, bit-reproducible Monte Carlo trials
//!   and CSV persistence ([`harness`]).
//!
//! Elements of `[n]` are 1-based everywhere in the public API, matching the
//! batch file format; internal storage is 0-based and contiguous.

#![forbid(unsafe_code)]

pub mod adversary;
pub mod data;
pub mod dist;
pub mod dist_set;
pub mod harness;
pub mod lp;
pub mod subset_lp;
pub mod tensor;
pub mod verify;

use std::path::PathBuf;

use thiserror::Error;

/// Absolute tolerance for "entries sum to one" checks on probability
/// vectors, count distributions and probability tensors.
///
/// Violations are hard errors; nothing in the crate renormalizes silently.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Probability entries may undershoot zero by at most this much before they
/// are rejected. Covers rounding in constructions that are nonnegative in
/// exact arithmetic.
pub const PROB_NEG_TOL: f64 = 1e-12;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dense tensor too large: n={n}, k={k} exceeds cap of {cap} entries")]
    TensorTooLarge { n: usize, k: usize, cap: usize },

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("lp solver: {0}")]
    Lp(#[from] lp::LpError),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by geometry, cocycle and builder operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input columns are rank deficient: numerical rank {rank} < {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("subspace is trivial (dimension 0)")]
    EmptySubspace,

    #[error("subspaces are not complementary: {0}")]
    NotComplementary(String),

    #[error("vector is numerically zero")]
    ZeroVector,

    #[error("vector is not in the cone interior (margin {margin:.3e})")]
    NotInterior { margin: f64 },

    #[error("subspace exits the cone interior (worst margin {margin:.3e})")]
    NotInCone { margin: f64 },

    #[error("map is not strictly cone invariant: image margin {margin:.3e} at sample {sample}")]
    NotStrictlyInvariant { margin: f64, sample: usize },

    #[error("no sampled pair has angle index above 1")]
    NoAdmissiblePairs,

    #[error("no cone opening satisfies the containment sandwich: {0}")]
    FitFailure(String),

    #[error("subspace is not separated from the cone (separation {separation:.3e})")]
    NotSeparated { separation: f64 },

    #[error("requested product window [{from}, {to}) exceeds the trace window [{lo}, {hi}]")]
    WindowExceeded { from: i64, to: i64, lo: i64, hi: i64 },

    #[error("sequence value at index {index} is not positive")]
    NonPositiveValue { index: usize },

    #[error("spectral gap {gap:.3e} below minimum {min:.3e}")]
    GapTooSmall { gap: f64, min: f64 },

    #[error("subspace family is not invariant at step {step} (gap {gap:.3e})")]
    NotInvariant { step: i64, gap: f64 },

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("series terms stopped decaying at term {term} (norm {norm:.3e})")]
    SeriesDiverging { term: usize, norm: f64 },

    #[error("no trace step falls in the return window [{m}, {n}]")]
    EmptyReturnSet { m: usize, n: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

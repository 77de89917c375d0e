use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("factorization failed: matrix is indefinite or too ill-conditioned (last jitter tried {last_jitter:e})")]
    FactorizationFailed { last_jitter: f64 },

    #[error("saddle-point system is rank deficient: Schur complement is not positive definite")]
    RankDeficient,

    #[error("node set is not unisolvent for the function space (rank {rank} < dimension {dim})")]
    NotUnisolvent { rank: usize, dim: usize },

    #[error("unsupported kernel/measure combination: {0}")]
    UnsupportedCombination(String),

    #[error("point lies on the boundary of the unit box (coordinate {index} = {value})")]
    DomainBoundary { index: usize, value: f64 },

    #[error("evaluation grid with {points} points exceeds the limit of {limit}")]
    GridTooLarge { points: u128, limit: u128 },

    #[error("cubature weight {index} is zero")]
    ZeroWeight { index: usize },

    #[error("duplicate nodes at positions {first} and {second}")]
    DuplicateNode { first: usize, second: usize },

    #[error("computed variance {value:e} is negative beyond roundoff tolerance {tolerance:e}")]
    NegativeVariance { value: f64, tolerance: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// Stable identifier used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::FactorizationFailed { .. } => "FactorizationFailed",
            Error::RankDeficient => "RankDeficient",
            Error::NotUnisolvent { .. } => "NotUnisolvent",
            Error::UnsupportedCombination(_) => "UnsupportedCombination",
            Error::DomainBoundary { .. } => "DomainBoundary",
            Error::GridTooLarge { .. } => "GridTooLarge",
            Error::ZeroWeight { .. } => "ZeroWeight",
            Error::DuplicateNode { .. } => "DuplicateNode",
            Error::NegativeVariance { .. } => "NegativeVariance",
            Error::InvalidParameter(_) => "InvalidParameter",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

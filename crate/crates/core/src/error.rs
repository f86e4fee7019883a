// SPDX-License-Identifier: Apache-2.0
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScarError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("site {site} out of range 1..={sites}")]
    SiteOutOfRange { site: usize, sites: usize },

    #[error("basis mismatch: {left} vs {right}")]
    BasisMismatch { left: String, right: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "dense diagonalization refused: dimension {dim} exceeds cap {cap}; \
         split the problem into C or momentum sectors, or raise SCARLAB_DENSE_CAP"
    )]
    DenseCapExceeded { dim: usize, cap: usize },

    #[error("operator is not Hermitian")]
    NotHermitian,

    #[error("too few levels: {got} available, {need} required")]
    TooFewLevels { got: usize, need: usize },

    #[error("sector error: {0}")]
    Sector(String),

    #[error("spectral data carries no eigenvectors")]
    MissingEigenvectors,

    #[error("state norm {0} deviates from 1")]
    NotNormalized(f64),

    #[error("Krylov step failed: {0}")]
    KrylovStep(String),

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, ScarError>;

//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseDomError {
    #[error("points per axis must be a power of two >= 2, got {0}")]
    NotPowerOfTwo(usize),

    #[error("anisotropy entries must be strictly positive, got {0}")]
    NonPositiveAnisotropy(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("generation range [{k_min}, {k_max}] produces cubes smaller than a grid cell on axis {axis}")]
    EmptyFineCubes { k_min: i32, k_max: i32, axis: usize },

    #[error("invalid generation range [{0}, {1}]")]
    BadGenerationRange(i32, i32),

    #[error("{0}")]
    InvalidParam(String),

    #[error("cost guard exceeded: {points} points > {limit} (pass force=true to override)")]
    GuardExceeded { points: usize, limit: usize },

    #[error("measure bound violated at cube {cube}: mu(Omega) = {mu_omega:.6e} > {bound:.6e} (C_T too small; enable adaptive mode or raise C_T)")]
    MeasureBoundViolated { cube: usize, mu_omega: f64, bound: f64 },

    #[error("no cube in any adjacent system contains the ball (center {center}, radius {radius})")]
    NoContainingCube { center: usize, radius: f64 },

    #[error("covering verification failed: {0}")]
    CoveringFailed(String),

    #[error("shifted-system containment failed for ball (center {center}, radius {radius})")]
    ContainmentFailed { center: usize, radius: f64 },

    #[error("monte carlo sample count must be >= 1000, got {0}")]
    MonteCarloTooFew(usize),

    #[error("divergent Dini integral: modulus exponent {0} <= 0")]
    DivergentDini(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SparseDomError>;

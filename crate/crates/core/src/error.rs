use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "geometry: cloud saturated after {attempts} attempts, placed {placed} of {target} spins \
         (requested density exceeds the packing limit for this blockade radius)"
    )]
    Saturation {
        placed: usize,
        target: usize,
        attempts: u64,
    },

    #[error("couplings: spins {i} and {j} coincide")]
    CoincidentSpins { i: usize, j: usize },

    #[error("emch-radin requires a pure Ising ensemble, found nonzero exchange coupling")]
    NotIsing,

    #[error("exact diagonalization: {n} spins exceeds the configured maximum of {n_max}")]
    DimensionExceeded { n: usize, n_max: usize },

    #[error("krylov propagation could not reach tolerance {tolerance:e} (step shrank to {step:e} us)")]
    KrylovConvergence { tolerance: f64, step: f64 },

    #[error("dtwa: adaptive step underflow at t = {time} us (step {step:e} us)")]
    IntegratorDivergence { time: f64, step: f64 },

    #[error("fit: {found} usable points, at least {required} required")]
    InsufficientPoints { found: usize, required: usize },

    #[error("rescaling frequency is zero")]
    ZeroRescaleFrequency,

    #[error("collapse: traces have no overlapping rescaled-time support")]
    EmptyOverlap,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

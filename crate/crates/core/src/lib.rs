//! Relaxation dynamics of disordered Heisenberg spin-1/2 ensembles.
//!
//! Four engines compute the x-magnetization of an initially x-polarized
//! ensemble and cross-check each other:
//!
//! * [`analytic`]: the exact Ising product of cosines and the isolated-pair
//!   approximation,
//! * [`dtwa`]: discrete truncated Wigner sampling of classical spin
//!   trajectories,
//! * [`ed`]: exact evolution for small systems,
//! * [`mace`]: per-spin exact evolution of the most strongly coupled cluster.
//!
//! Units: positions in micrometers, times in microseconds, couplings as
//! angular frequencies in rad/us.

pub mod analysis;
pub mod analytic;
pub mod convention;
pub mod couplings;
pub mod dtwa;
pub mod ed;
pub mod error;
pub mod geometry;
pub mod mace;
pub mod rng;
pub mod trace;

pub use analysis::{
    fit_stretched_exponential, measure_collapse, rescale_time, CollapseReport, FitResult,
    RescaleMode,
};
pub use analytic::{emch_radin, pair_model};
pub use convention::FrequencyConvention;
pub use couplings::{
    build_couplings, CouplingKind, MedianFrequencies, ModelFamily, ModelSpec, SpinEnsemble,
};
pub use dtwa::{run_dtwa, DtwaConfig, Integrator};
pub use ed::{run_ed, EdMethod, EdPlan};
pub use error::{Error, Result};
pub use geometry::{sample_positions, CloudSpec, DensityProfile, Positions};
pub use mace::{run_mace, MaceConfig, Ranking};
pub use trace::{Engine, MagnetizationTrace, Spacing, TimeGrid, TimeUnit};

//! Post-processing: time rescaling, collapse measurement and
//! stretched-exponential fits.

mod collapse;
mod fit;
mod rescale;

pub use collapse::{measure_collapse, CollapseReport, COMMON_GRID_POINTS};
pub use fit::{
    default_window, fit_stretched_exponential, stretched_exponential, FitResult, MIN_FIT_POINTS,
    PLATEAU_THRESHOLD,
};
pub use rescale::{rescale_time, rescaling_frequency, RescaleMode};

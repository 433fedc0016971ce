use serde::{Deserialize, Serialize};

use crate::couplings::MedianFrequencies;
use crate::error::{Error, Result};
use crate::trace::{MagnetizationTrace, TimeUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RescaleMode {
    /// Median pair oscillation frequency `|J_perp - J_par|`.
    #[default]
    FreqDifference,
    /// `max(J_median_perp, J_median_par)`.
    MaxMedian,
}

impl RescaleMode {
    pub fn name(self) -> &'static str {
        match self {
            RescaleMode::FreqDifference => "freq_difference",
            RescaleMode::MaxMedian => "max_median",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "freq_difference" => Some(RescaleMode::FreqDifference),
            "max_median" => Some(RescaleMode::MaxMedian),
            _ => None,
        }
    }
}

pub fn rescaling_frequency(medians: &MedianFrequencies, mode: RescaleMode) -> f64 {
    match mode {
        RescaleMode::FreqDifference => medians.pair,
        RescaleMode::MaxMedian => medians.perp.max(medians.par),
    }
}

/// Multiplies the time axis by the rescaling frequency; values are untouched.
pub fn rescale_time(
    trace: &MagnetizationTrace,
    medians: &MedianFrequencies,
    mode: RescaleMode,
) -> Result<MagnetizationTrace> {
    if trace.time_unit == TimeUnit::Rescaled {
        return Err(Error::invalid("trace is already on a rescaled time axis"));
    }
    let w = rescaling_frequency(medians, mode);
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::ZeroRescaleFrequency);
    }
    let mut out = trace.clone();
    out.grid = trace.grid.scaled(w);
    out.time_unit = TimeUnit::Rescaled;
    out.medians = Some(*medians);
    Ok(out)
}

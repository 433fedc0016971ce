//! Time grids and magnetization traces, with the CSV exchange format.
//!
//! CSV layout: `# key=value` header comments, then a `time_us,sx,stderr`
//! (or `time_rescaled,...`) header row. `stderr` is empty where the engine is
//! deterministic.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::couplings::MedianFrequencies;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    spacing: Spacing,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>, spacing: Spacing) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("time grid is empty"));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::invalid("grid times must be finite and non-negative"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid times must be strictly ascending"));
        }
        // t = 0 on a log grid is only meaningful as a prepended point
        if spacing == Spacing::Log && times[0] == 0.0 && times.len() < 2 {
            return Err(Error::invalid("log grid needs a positive time"));
        }
        Ok(Self { times, spacing })
    }

    pub fn linear(t_min: f64, t_max: f64, count: usize) -> Result<Self> {
        if count < 2 || t_max <= t_min {
            return Err(Error::invalid("linear grid needs count >= 2 and t_max > t_min"));
        }
        let step = (t_max - t_min) / (count - 1) as f64;
        let times = (0..count)
            .map(|k| if k + 1 == count { t_max } else { t_min + step * k as f64 })
            .collect();
        Self::new(times, Spacing::Linear)
    }

    /// `count` log-spaced points in `[t_min, t_max]`, optionally preceded by
    /// `t = 0`.
    pub fn log(t_min: f64, t_max: f64, count: usize, include_zero: bool) -> Result<Self> {
        if !(t_min > 0.0) || t_max <= t_min || count < 2 {
            return Err(Error::invalid("log grid needs 0 < t_min < t_max and count >= 2"));
        }
        let (a, b) = (t_min.ln(), t_max.ln());
        let mut times = Vec::with_capacity(count + 1);
        if include_zero {
            times.push(0.0);
        }
        for k in 0..count {
            let t = match k {
                0 => t_min,
                k if k + 1 == count => t_max,
                k => (a + (b - a) * k as f64 / (count - 1) as f64).exp(),
            };
            times.push(t);
        }
        Self::new(times, Spacing::Log)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub(crate) fn scaled(&self, factor: f64) -> Self {
        Self {
            times: self.times.iter().map(|t| t * factor).collect(),
            spacing: self.spacing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    EmchRadin,
    Pair,
    Dtwa,
    Mace,
    Ed,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::EmchRadin => "emch_radin",
            Engine::Pair => "pair",
            Engine::Dtwa => "dtwa",
            Engine::Mace => "mace",
            Engine::Ed => "ed",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "emch_radin" => Engine::EmchRadin,
            "pair" => Engine::Pair,
            "dtwa" => Engine::Dtwa,
            "mace" => Engine::Mace,
            "ed" => Engine::Ed,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    #[default]
    Microseconds,
    /// Dimensionless, time multiplied by a median coupling frequency.
    Rescaled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnetizationTrace {
    pub grid: TimeGrid,
    /// Per-spin x magnetization, in [-0.5, 0.5].
    pub values: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    pub engine: Engine,
    pub time_unit: TimeUnit,
    /// Number of disorder realizations averaged into this trace.
    pub realizations: usize,
    pub medians: Option<MedianFrequencies>,
}

impl MagnetizationTrace {
    pub fn new(grid: TimeGrid, values: Vec<f64>, stderr: Option<Vec<f64>>, engine: Engine) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self {
            grid,
            values,
            stderr,
            engine,
            time_unit: TimeUnit::Microseconds,
            realizations: 1,
            medians: None,
        }
    }

    pub fn times(&self) -> &[f64] {
        self.grid.times()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# engine={}", self.engine.name())?;
        writeln!(w, "# realizations={}", self.realizations)?;
        writeln!(w, "# spacing={}", match self.grid.spacing() {
            Spacing::Linear => "linear",
            Spacing::Log => "log",
        })?;
        if let Some(m) = &self.medians {
            writeln!(w, "# median_perp_rad_per_us={}", m.perp)?;
            writeln!(w, "# median_par_rad_per_us={}", m.par)?;
            writeln!(w, "# median_pair_rad_per_us={}", m.pair)?;
        }
        let time_col = match self.time_unit {
            TimeUnit::Microseconds => "time_us",
            TimeUnit::Rescaled => "time_rescaled",
        };
        writeln!(w, "{time_col},sx,stderr")?;
        for (k, (t, m)) in self.times().iter().zip(&self.values).enumerate() {
            match &self.stderr {
                Some(se) => writeln!(w, "{t},{m},{}", se[k])?,
                None => writeln!(w, "{t},{m},")?,
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut engine = None;
        let mut realizations = 1usize;
        let mut spacing = Spacing::Log;
        let (mut perp, mut par, mut pair) = (None, None, None);
        let mut time_unit = None;
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut errs: Vec<Option<f64>> = Vec::new();
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{what}: {e}")))
        };
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let Some((key, value)) = comment.trim().split_once('=') else {
                    continue;
                };
                let value = value.trim();
                match key.trim() {
                    "engine" => {
                        engine = Some(Engine::from_name(value).ok_or_else(|| {
                            Error::Parse(format!("unknown engine tag {value:?}"))
                        })?)
                    }
                    "realizations" => {
                        realizations = value
                            .parse()
                            .map_err(|e| Error::Parse(format!("realizations: {e}")))?
                    }
                    "spacing" => {
                        spacing = if value == "linear" { Spacing::Linear } else { Spacing::Log }
                    }
                    "median_perp_rad_per_us" => perp = Some(parse(value, "median_perp")?),
                    "median_par_rad_per_us" => par = Some(parse(value, "median_par")?),
                    "median_pair_rad_per_us" => pair = Some(parse(value, "median_pair")?),
                    _ => {}
                }
                continue;
            }
            if time_unit.is_none() {
                time_unit = Some(if line.starts_with("time_us") {
                    TimeUnit::Microseconds
                } else if line.starts_with("time_rescaled") {
                    TimeUnit::Rescaled
                } else {
                    return Err(Error::Parse(format!("unexpected trace header {line:?}")));
                });
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < 2 {
                return Err(Error::Parse(format!("trace row {line:?} has too few columns")));
            }
            times.push(parse(cols[0], "time")?);
            values.push(parse(cols[1], "sx")?);
            errs.push(match cols.get(2).map(|s| s.trim()) {
                Some(s) if !s.is_empty() => Some(parse(s, "stderr")?),
                _ => None,
            });
        }
        let engine = engine.ok_or_else(|| Error::Parse("trace lacks an engine tag".into()))?;
        let stderr = if !errs.is_empty() && errs.iter().all(Option::is_some) {
            Some(errs.into_iter().map(Option::unwrap).collect())
        } else {
            None
        };
        let medians = match (perp, par, pair) {
            (Some(perp), Some(par), Some(pair)) => Some(MedianFrequencies { perp, par, pair }),
            _ => None,
        };
        Ok(Self {
            grid: TimeGrid::new(times, spacing)?,
            values,
            stderr,
            engine,
            time_unit: time_unit.unwrap_or_default(),
            realizations,
            medians,
        })
    }
}

//! Run configuration. Every dimensional key carries its unit in the name;
//! coupling constants are given as `C/2pi` in MHz times the matching power
//! of micrometers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinrelax_core::dtwa::DEFAULT_BATCH_SIZE;
use spinrelax_core::ed::DEFAULT_N_MAX;
use spinrelax_core::geometry::DEFAULT_MAX_ATTEMPTS;
use spinrelax_core::{
    CloudSpec, DensityProfile, EdMethod, Engine, FrequencyConvention, Integrator, ModelSpec,
    Ranking, RescaleMode, Spacing, TimeGrid,
};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudConfig {
    pub dimensions_um: [f64; 3],
    pub n_spins: usize,
    pub r_blockade_um: f64,
    #[serde(default)]
    pub density_profile: DensityProfile,
    #[serde(default = "default_attempts")]
    pub max_attempts: u64,
}

fn default_attempts() -> u64 {
    DEFAULT_MAX_ATTEMPTS
}

impl CloudConfig {
    pub fn spec(&self, seed: u64) -> CloudSpec {
        CloudSpec {
            dimensions: self.dimensions_um,
            n_target: self.n_spins,
            r_blockade: self.r_blockade_um,
            density_profile: self.density_profile,
            seed,
            max_attempts: self.max_attempts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Ising {
        c6_par_mhz_um6_over_2pi: f64,
    },
    Xx {
        c3_perp_mhz_um3_over_2pi: f64,
        #[serde(default = "z_axis")]
        quantization_axis: [f64; 3],
    },
    Xxz {
        c6_perp_mhz_um6_over_2pi: f64,
        anisotropy_delta: f64,
    },
}

fn z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

impl ModelConfig {
    pub fn spec(&self) -> ModelSpec {
        match *self {
            ModelConfig::Ising {
                c6_par_mhz_um6_over_2pi,
            } => ModelSpec::Ising {
                c6_par_mhz: c6_par_mhz_um6_over_2pi,
            },
            ModelConfig::Xx {
                c3_perp_mhz_um3_over_2pi,
                quantization_axis,
            } => ModelSpec::Xx {
                c3_perp_mhz: c3_perp_mhz_um3_over_2pi,
                quantization_axis,
            },
            ModelConfig::Xxz {
                c6_perp_mhz_um6_over_2pi,
                anisotropy_delta,
            } => ModelSpec::Xxz {
                c6_perp_mhz: c6_perp_mhz_um6_over_2pi,
                anisotropy_delta,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_min_us: f64,
    pub t_max_us: f64,
    pub count: usize,
    #[serde(default = "log_spacing")]
    pub spacing: Spacing,
    /// Prepend `t = 0` to a log grid.
    #[serde(default)]
    pub include_zero: bool,
}

fn log_spacing() -> Spacing {
    Spacing::Log
}

impl GridConfig {
    pub fn grid(&self) -> spinrelax_core::Result<TimeGrid> {
        match self.spacing {
            Spacing::Linear => TimeGrid::linear(self.t_min_us, self.t_max_us, self.count),
            Spacing::Log => TimeGrid::log(self.t_min_us, self.t_max_us, self.count, self.include_zero),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EngineConfig {
    EmchRadin,
    Pair,
    Dtwa {
        n_trajectories: usize,
        #[serde(default = "default_integrator")]
        integrator: Integrator,
        /// Fixed RK4 step in microseconds.
        #[serde(default)]
        dt_us: Option<f64>,
        /// Fixed RK4 step as a fraction of the inverse fastest local field,
        /// resolved per realization.
        #[serde(default)]
        step_fraction: Option<f64>,
        /// Relative tolerance of the adaptive integrator.
        #[serde(default)]
        tolerance: Option<f64>,
        #[serde(default = "default_batch")]
        batch_size: usize,
    },
    Mace {
        #[serde(default = "default_cluster")]
        cluster_size: usize,
        #[serde(default)]
        ranking: Ranking,
        #[serde(default = "default_n_max")]
        n_max: usize,
        /// Also write the cluster membership of every center.
        #[serde(default)]
        dump_clusters: bool,
    },
    Ed {
        #[serde(default)]
        method: Option<EdMethod>,
        #[serde(default = "default_n_max")]
        n_max: usize,
        #[serde(default)]
        tolerance: Option<f64>,
    },
}

fn default_integrator() -> Integrator {
    Integrator::Rk4Fixed
}
fn default_batch() -> usize {
    DEFAULT_BATCH_SIZE
}
fn default_cluster() -> usize {
    10
}
fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

impl EngineConfig {
    pub fn engine(&self) -> Engine {
        match self {
            EngineConfig::EmchRadin => Engine::EmchRadin,
            EngineConfig::Pair => Engine::Pair,
            EngineConfig::Dtwa { .. } => Engine::Dtwa,
            EngineConfig::Mace { .. } => Engine::Mace,
            EngineConfig::Ed { .. } => Engine::Ed,
        }
    }

    fn validate(&self) -> Result<(), String> {
        if let EngineConfig::Dtwa {
            n_trajectories,
            integrator,
            dt_us,
            step_fraction,
            tolerance,
            batch_size,
        } = self
        {
            if *n_trajectories == 0 || *batch_size == 0 {
                return Err("dtwa: n_trajectories and batch_size must be positive".into());
            }
            let positive = |x: &Option<f64>| x.map_or(true, |v| v.is_finite() && v > 0.0);
            if !(positive(dt_us) && positive(step_fraction) && positive(tolerance)) {
                return Err("dtwa: step and tolerance settings must be positive".into());
            }
            match integrator {
                Integrator::Rk4Fixed if dt_us.is_some() && step_fraction.is_some() => {
                    return Err("dtwa: give at most one of dt_us and step_fraction".into())
                }
                Integrator::Rk4Fixed if tolerance.is_some() => {
                    return Err("dtwa: tolerance applies to rk45_adaptive only".into())
                }
                Integrator::Rk45Adaptive if dt_us.is_some() || step_fraction.is_some() => {
                    return Err("dtwa: rk45_adaptive takes a tolerance, not a step".into())
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Fit the rescaled trace instead of the microsecond one.
    #[serde(default)]
    pub rescale: Option<RescaleMode>,
    #[serde(default)]
    pub t_min: Option<f64>,
    #[serde(default)]
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub n_realizations: usize,
    /// Relative paths resolve against the config file's directory.
    pub output_dir: PathBuf,
    pub cloud: CloudConfig,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub engines: Vec<EngineConfig>,
    /// Analytic prefactor; defaults to the calibrated value.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config and resolves a relative `output_dir` against its
    /// location.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.output_dir.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.output_dir = dir.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn convention(&self) -> FrequencyConvention {
        self.kappa
            .map(|k| FrequencyConvention { kappa: k })
            .unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.engines.is_empty() {
            return bad("at least one engine must be selected".into());
        }
        if self.n_realizations == 0 {
            return bad("n_realizations must be at least 1".into());
        }
        let mut seen = Vec::new();
        for e in &self.engines {
            if seen.contains(&e.engine()) {
                return bad(format!("engine {} selected twice", e.engine().name()));
            }
            seen.push(e.engine());
            e.validate().map_err(CliError::Config)?;
        }
        if let Some(k) = self.kappa {
            FrequencyConvention::new(k).map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.cloud
            .spec(0)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.model
            .spec()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.grid.grid().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }
}

//! The `run` verb: realizations are simulated independently (in parallel)
//! and a single-threaded finalizer writes every artifact in a fixed order.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use spinrelax_core::analysis::{fit_stretched_exponential, rescale_time, FitResult};
use spinrelax_core::dtwa::{max_field, run_dtwa_detailed, ClassicalDrift};
use spinrelax_core::ed::{run_ed_detailed, ConservationDrift, EdPlan};
use spinrelax_core::mace::{run_mace_detailed, write_clusters_csv};
use spinrelax_core::rng::derive_seed;
use spinrelax_core::{
    build_couplings, emch_radin, pair_model, sample_positions, DtwaConfig, Engine,
    FrequencyConvention, MaceConfig, MagnetizationTrace, MedianFrequencies, Positions,
    SpinEnsemble, TimeGrid,
};

use crate::config::{EngineConfig, RunConfig};
use crate::CliError;

/// Seed of realization `r`; positions use it directly.
pub fn realization_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, r as u64)
}

/// Seed of the trajectory sampler within a realization.
pub fn dtwa_seed(realization_seed: u64) -> u64 {
    derive_seed(realization_seed, 1)
}

pub fn realization_dir(root: &Path, r: usize) -> PathBuf {
    root.join(format!("realization_{r:03}"))
}

pub fn trace_file_name(engine: Engine) -> String {
    format!("trace_{}.csv", engine.name())
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EngineDiagnostics {
    None,
    Dtwa { dt_or_tol: f64, drift: ClassicalDrift },
    Ed { drift: ConservationDrift },
}

#[derive(Debug, Clone, Serialize)]
pub struct EngineRecord {
    pub engine: Engine,
    pub wall_seconds: f64,
    pub diagnostics: EngineDiagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct RealizationRecord {
    pub index: usize,
    pub seed: u64,
    pub dtwa_seed: u64,
    pub n_spins: usize,
    pub medians: MedianFrequencies,
    pub engines: Vec<EngineRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRecord {
    pub engine: Engine,
    pub result: Option<FitResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub status: RunStatus,
    pub error: Option<String>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub wall_seconds: f64,
    pub master_seed: u64,
    pub seed_derivation: &'static str,
    pub config: RunConfig,
    pub realizations: Vec<RealizationRecord>,
    pub fits: Vec<FitRecord>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub averaged: Vec<MagnetizationTrace>,
}

struct Realization {
    record: RealizationRecord,
    positions: Positions,
    traces: Vec<MagnetizationTrace>,
    clusters: Option<Vec<Vec<usize>>>,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn run_engine(
    cfg: &EngineConfig,
    ens: &SpinEnsemble,
    grid: &TimeGrid,
    conv: &FrequencyConvention,
    seed: u64,
    clusters: &mut Option<Vec<Vec<usize>>>,
) -> spinrelax_core::Result<(MagnetizationTrace, EngineDiagnostics)> {
    Ok(match cfg {
        EngineConfig::EmchRadin => (emch_radin(ens, grid, conv)?, EngineDiagnostics::None),
        EngineConfig::Pair => (pair_model(ens, grid, conv)?, EngineDiagnostics::None),
        EngineConfig::Dtwa {
            n_trajectories,
            integrator,
            dt_us,
            step_fraction,
            tolerance,
            batch_size,
        } => {
            let dt_or_tol = match (dt_us, step_fraction, tolerance) {
                (Some(dt), _, _) => Some(*dt),
                (_, Some(f), _) => {
                    let w = max_field(ens, conv);
                    Some(if w > 0.0 { f / w } else { grid.t_max().max(1.0) })
                }
                (_, _, tol) => *tol,
            };
            let dcfg = DtwaConfig {
                n_trajectories: *n_trajectories,
                integrator: *integrator,
                dt_or_tol,
                seed,
                batch_size: *batch_size,
            };
            let run = run_dtwa_detailed(ens, grid, &dcfg, conv)?;
            (
                run.trace,
                EngineDiagnostics::Dtwa {
                    dt_or_tol: run.dt_or_tol,
                    drift: run.drift,
                },
            )
        }
        EngineConfig::Mace {
            cluster_size,
            ranking,
            n_max,
            dump_clusters,
        } => {
            let mcfg = MaceConfig {
                cluster_size: *cluster_size,
                ranking: *ranking,
                n_max: *n_max,
            };
            let run = run_mace_detailed(ens, grid, &mcfg, conv)?;
            if *dump_clusters {
                *clusters = Some(run.clusters);
            }
            (run.trace, EngineDiagnostics::None)
        }
        EngineConfig::Ed {
            method,
            n_max,
            tolerance,
        } => {
            let mut plan = EdPlan::for_size(ens.len());
            plan.n_max = *n_max;
            if let Some(m) = method {
                plan.method = *m;
            }
            if let Some(t) = tolerance {
                plan.tolerance = *t;
            }
            let run = run_ed_detailed(ens, grid, &plan, conv)?;
            (run.trace, EngineDiagnostics::Ed { drift: run.drift })
        }
    })
}

fn simulate(cfg: &RunConfig, grid: &TimeGrid, r: usize) -> spinrelax_core::Result<Realization> {
    let conv = cfg.convention();
    let seed = realization_seed(cfg.master_seed, r);
    let positions = sample_positions(&cfg.cloud.spec(seed))?;
    let ens = build_couplings(&positions, &cfg.model.spec())?;
    let medians = MedianFrequencies::from_ensemble(&ens)?;
    let mut traces = Vec::with_capacity(cfg.engines.len());
    let mut records = Vec::with_capacity(cfg.engines.len());
    let mut clusters = None;
    for e in &cfg.engines {
        let start = Instant::now();
        let (mut trace, diagnostics) = run_engine(e, &ens, grid, &conv, dtwa_seed(seed), &mut clusters)?;
        trace.medians = Some(medians);
        records.push(EngineRecord {
            engine: e.engine(),
            wall_seconds: start.elapsed().as_secs_f64(),
            diagnostics,
        });
        traces.push(trace);
    }
    Ok(Realization {
        record: RealizationRecord {
            index: r,
            seed,
            dtwa_seed: dtwa_seed(seed),
            n_spins: ens.len(),
            medians,
            engines: records,
        },
        positions,
        traces,
        clusters,
    })
}

/// Pointwise mean over realizations. With several realizations the error
/// bar is the standard error of that mean; a single realization keeps the
/// engine's own error bar.
pub fn average_traces(traces: &[&MagnetizationTrace]) -> MagnetizationTrace {
    let first = traces[0];
    let r = traces.len();
    let n = r as f64;
    let len = first.len();
    let values: Vec<f64> = (0..len)
        .map(|k| traces.iter().map(|t| t.values[k]).sum::<f64>() / n)
        .collect();
    let stderr = if r > 1 {
        Some(
            (0..len)
                .map(|k| {
                    let var = traces
                        .iter()
                        .map(|t| (t.values[k] - values[k]).powi(2))
                        .sum::<f64>()
                        / (n - 1.0);
                    (var / n).sqrt()
                })
                .collect(),
        )
    } else {
        first.stderr.clone()
    };
    let medians: Vec<MedianFrequencies> = traces.iter().filter_map(|t| t.medians).collect();
    let mut out = MagnetizationTrace::new(first.grid.clone(), values, stderr, first.engine);
    out.realizations = r;
    out.medians = MedianFrequencies::mean(&medians);
    out
}

struct Writer<'a> {
    root: &'a Path,
    outputs: Vec<String>,
}

impl Writer<'_> {
    fn file(&mut self, rel: &Path) -> Result<BufWriter<fs::File>, CliError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        }
        let f = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.outputs.push(rel.to_string_lossy().replace('\\', "/"));
        Ok(BufWriter::new(f))
    }

    fn trace(&mut self, rel: &Path, t: &MagnetizationTrace) -> Result<(), CliError> {
        t.write_csv(self.file(rel)?)?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &Path, value: &T) -> Result<(), CliError> {
        serde_json::to_writer_pretty(self.file(rel)?, value)
            .map_err(|e| CliError::Io(e.to_string()))
    }
}

#[derive(Serialize)]
struct TraceMeta<'a> {
    engine: Engine,
    family: &'static str,
    realizations: usize,
    medians: Option<MedianFrequencies>,
    master_seed: u64,
    realization_seeds: &'a [u64],
}

/// Runs every realization and writes traces, fits and the manifest below
/// `cfg.output_dir`. A failure still leaves a manifest marked `failed`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let started = unix_now();
    let clock = Instant::now();
    let root = cfg.output_dir.clone();
    fs::create_dir_all(&root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
    let mut writer = Writer {
        root: &root,
        outputs: Vec::new(),
    };
    let mut manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        status: RunStatus::Failed,
        error: None,
        started_unix_s: started,
        finished_unix_s: started,
        wall_seconds: 0.0,
        master_seed: cfg.master_seed,
        seed_derivation: "realization r: splitmix64(master_seed, r); dtwa: splitmix64(realization, 1); trajectory k: chacha8 stream k",
        config: cfg.clone(),
        realizations: Vec::new(),
        fits: Vec::new(),
        outputs: Vec::new(),
    };
    let result = execute(cfg, &mut writer, &mut manifest);
    manifest.finished_unix_s = unix_now();
    manifest.wall_seconds = clock.elapsed().as_secs_f64();
    manifest.outputs = writer.outputs.clone();
    let averaged = match result {
        Ok(avg) => {
            manifest.status = RunStatus::Complete;
            avg
        }
        Err(e) => {
            manifest.error = Some(e.to_string());
            let _ = writer.json(Path::new("manifest.json"), &manifest);
            return Err(e);
        }
    };
    writer.json(Path::new("manifest.json"), &manifest)?;
    Ok(RunOutcome { manifest, averaged })
}

fn execute(
    cfg: &RunConfig,
    writer: &mut Writer<'_>,
    manifest: &mut Manifest,
) -> Result<Vec<MagnetizationTrace>, CliError> {
    let grid = cfg.grid.grid()?;
    let realizations: Vec<Realization> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|r| simulate(cfg, &grid, r))
        .collect::<spinrelax_core::Result<_>>()?;

    for real in &realizations {
        let dir = PathBuf::from(format!("realization_{:03}", real.record.index));
        real.positions.write_csv(writer.file(&dir.join("positions.csv"))?)?;
        for t in &real.traces {
            writer.trace(&dir.join(trace_file_name(t.engine)), t)?;
        }
        if let Some(c) = &real.clusters {
            write_clusters_csv(c, writer.file(&dir.join("clusters_mace.csv"))?)?;
        }
        manifest.realizations.push(real.record.clone());
    }

    let seeds: Vec<u64> = realizations.iter().map(|r| r.record.seed).collect();
    let mut averaged = Vec::with_capacity(cfg.engines.len());
    for (k, e) in cfg.engines.iter().enumerate() {
        let engine = e.engine();
        let traces: Vec<&MagnetizationTrace> = realizations.iter().map(|r| &r.traces[k]).collect();
        let avg = average_traces(&traces);
        writer.trace(Path::new(&trace_file_name(engine)), &avg)?;
        writer.json(
            Path::new(&format!("trace_{}.meta.json", engine.name())),
            &TraceMeta {
                engine,
                family: cfg.model.spec().family().name(),
                realizations: avg.realizations,
                medians: avg.medians,
                master_seed: cfg.master_seed,
                realization_seeds: &seeds,
            },
        )?;
        if let Some(fit) = &cfg.fit {
            let record = fit_trace(&avg, fit);
            if let Some(r) = &record.result {
                writer.json(Path::new(&format!("fit_{}.json", engine.name())), r)?;
            }
            manifest.fits.push(record);
        }
        averaged.push(avg);
    }
    Ok(averaged)
}

fn fit_trace(trace: &MagnetizationTrace, fit: &crate::config::FitConfig) -> FitRecord {
    let attempt = || -> spinrelax_core::Result<FitResult> {
        let target = match (fit.rescale, &trace.medians) {
            (Some(mode), Some(m)) => rescale_time(trace, m, mode)?,
            _ => trace.clone(),
        };
        let window = match (fit.t_min, fit.t_max) {
            (None, None) => None,
            (a, b) => Some((a.unwrap_or(0.0), b.unwrap_or(target.grid.t_max()))),
        };
        fit_stretched_exponential(&target, window)
    };
    match attempt() {
        Ok(r) => FitRecord {
            engine: trace.engine,
            result: Some(r),
            error: None,
        },
        Err(e) => FitRecord {
            engine: trace.engine,
            result: None,
            error: Some(e.to_string()),
        },
    }
}

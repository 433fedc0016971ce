//! The analysis verbs operating on trace files.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use spinrelax_core::analysis::{fit_stretched_exponential, rescale_time, CollapseReport, FitResult};
use spinrelax_core::{measure_collapse, sample_positions, MagnetizationTrace, RescaleMode};

use crate::config::RunConfig;
use crate::pipeline::{realization_dir, realization_seed};
use crate::CliError;

pub fn read_trace(path: &Path) -> Result<MagnetizationTrace, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    MagnetizationTrace::read_csv(BufReader::new(f))
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Rescales every trace by its own stored medians and measures the collapse.
pub fn compare(
    paths: &[PathBuf],
    mode: RescaleMode,
    window: Option<(f64, f64)>,
) -> Result<CollapseReport, CliError> {
    if paths.len() < 2 {
        return Err(CliError::Usage("compare needs at least two trace files".into()));
    }
    let mut rescaled = Vec::with_capacity(paths.len());
    for p in paths {
        let t = read_trace(p)?;
        let medians = t.medians.ok_or_else(|| {
            CliError::Usage(format!(
                "{}: no median-frequency metadata in the header",
                p.display()
            ))
        })?;
        rescaled.push(rescale_time(&t, &medians, mode)?);
    }
    let mut report = measure_collapse(&rescaled, window)?;
    report.labels = paths
        .iter()
        .map(|p| p.to_string_lossy().into_owned())
        .collect();
    Ok(report)
}

/// Writes `<stem>.json` and `<stem>.csv`.
pub fn write_report(report: &CollapseReport, stem: &Path) -> Result<(), CliError> {
    let json = stem.with_extension("json");
    let csv = stem.with_extension("csv");
    let open = |p: &Path| fs::File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())));
    report.write_json(open(&json)?)?;
    report.write_csv(open(&csv)?)?;
    Ok(())
}

pub fn fit(
    path: &Path,
    t_min: Option<f64>,
    t_max: Option<f64>,
    rescale: Option<RescaleMode>,
) -> Result<FitResult, CliError> {
    let mut trace = read_trace(path)?;
    if let Some(mode) = rescale {
        let m = trace.medians.ok_or_else(|| {
            CliError::Usage(format!("{}: rescaling needs median metadata", path.display()))
        })?;
        trace = rescale_time(&trace, &m, mode)?;
    }
    let window = match (t_min, t_max) {
        (None, None) => None,
        (a, b) => Some((a.unwrap_or(0.0), b.unwrap_or(trace.grid.t_max()))),
    };
    Ok(fit_stretched_exponential(&trace, window)?)
}

/// Samples the positions of every realization of `cfg` with the same seeds
/// as `run`, and writes them below `out` (default: the config's output
/// directory).
pub fn positions(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let root = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    let mut written = Vec::with_capacity(cfg.n_realizations);
    for r in 0..cfg.n_realizations {
        let pos = sample_positions(&cfg.cloud.spec(realization_seed(cfg.master_seed, r)))?;
        let dir = realization_dir(&root, r);
        fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let path = dir.join("positions.csv");
        let f = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        pos.write_csv(std::io::BufWriter::new(f))?;
        written.push(path);
    }
    Ok(written)
}

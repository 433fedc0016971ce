use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::MagnetizationTrace;

pub const COMMON_GRID_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    /// Log-spaced over the common support of all inputs (and the window).
    pub common_grid: Vec<f64>,
    pub per_model_values: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub max_pairwise_deviation: f64,
    /// Root mean square over the grid of the across-model standard deviation.
    pub rms_spread: f64,
}

impl CollapseReport {
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "time_rescaled")?;
        for l in &self.labels {
            write!(w, ",{l}")?;
        }
        writeln!(w)?;
        for (k, t) in self.common_grid.iter().enumerate() {
            write!(w, "{t}")?;
            for v in &self.per_model_values {
                write!(w, ",{}", v[k])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Positive-time samples as `(ln t, m)`.
fn log_samples(trace: &MagnetizationTrace) -> Vec<(f64, f64)> {
    trace
        .times()
        .iter()
        .zip(&trace.values)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, m)| (t.ln(), *m))
        .collect()
}

fn interpolate(samples: &[(f64, f64)], x: f64) -> f64 {
    let k = samples.partition_point(|s| s.0 < x);
    if k == 0 {
        return samples[0].1;
    }
    if k == samples.len() {
        return samples[k - 1].1;
    }
    let (x0, y0) = samples[k - 1];
    let (x1, y1) = samples[k];
    if x1 == x0 {
        return y1;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Interpolates every trace onto a shared log grid and measures how far
/// apart the curves are.
pub fn measure_collapse(
    traces: &[MagnetizationTrace],
    window: Option<(f64, f64)>,
) -> Result<CollapseReport> {
    if traces.len() < 2 {
        return Err(Error::invalid("collapse needs at least two traces"));
    }
    let samples: Vec<Vec<(f64, f64)>> = traces.iter().map(log_samples).collect();
    if samples.iter().any(|s| s.len() < 2) {
        return Err(Error::EmptyOverlap);
    }
    let mut lo = samples.iter().map(|s| s[0].0).fold(f64::NEG_INFINITY, f64::max);
    let mut hi = samples.iter().map(|s| s[s.len() - 1].0).fold(f64::INFINITY, f64::min);
    if let Some((a, b)) = window {
        if !(a > 0.0 && b > a) {
            return Err(Error::invalid("collapse window must satisfy 0 < t_min < t_max"));
        }
        lo = lo.max(a.ln());
        hi = hi.min(b.ln());
    }
    if !(hi > lo) {
        return Err(Error::EmptyOverlap);
    }
    let n = COMMON_GRID_POINTS;
    let xs: Vec<f64> = (0..n)
        .map(|k| match k {
            0 => lo,
            _ if k == n - 1 => hi,
            _ => lo + (hi - lo) * k as f64 / (n - 1) as f64,
        })
        .collect();
    let per_model_values: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| xs.iter().map(|&x| interpolate(s, x)).collect())
        .collect();

    let mut max_dev = 0.0f64;
    let mut sq = 0.0;
    let m = traces.len() as f64;
    for k in 0..n {
        let column: Vec<f64> = per_model_values.iter().map(|v| v[k]).collect();
        let (min, max) = column
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        max_dev = max_dev.max(max - min);
        let mean = column.iter().sum::<f64>() / m;
        sq += column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
    }
    Ok(CollapseReport {
        common_grid: xs.iter().map(|x| x.exp()).collect(),
        per_model_values,
        labels: traces.iter().map(|t| t.engine.name().to_string()).collect(),
        max_pairwise_deviation: max_dev,
        rms_spread: (sq / n as f64).sqrt(),
    })
}

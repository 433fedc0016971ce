//! Moving average cluster expansion: every spin is evolved exactly together
//! with its most strongly coupled neighbours, and the center-spin
//! magnetizations are averaged.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convention::FrequencyConvention;
use crate::couplings::SpinEnsemble;
use crate::ed::{run_ed_detailed, EdPlan, DEFAULT_N_MAX};
use crate::error::{Error, Result};
use crate::trace::{Engine, MagnetizationTrace, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ranking {
    /// `|J_perp - J_par|`, so that two-spin clusters are the pair model.
    #[default]
    AbsPairFrequency,
    AbsJperp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaceConfig {
    pub cluster_size: usize,
    #[serde(default)]
    pub ranking: Ranking,
    /// Largest cluster handed to exact diagonalization.
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

impl Default for MaceConfig {
    fn default() -> Self {
        Self {
            cluster_size: 10,
            ranking: Ranking::AbsPairFrequency,
            n_max: DEFAULT_N_MAX,
        }
    }
}

impl MaceConfig {
    pub fn new(cluster_size: usize) -> Self {
        Self {
            cluster_size,
            ..Self::default()
        }
    }
}

fn metric(ens: &SpinEnsemble, ranking: Ranking, i: usize, j: usize) -> f64 {
    match ranking {
        Ranking::AbsPairFrequency => (ens.j_perp[(i, j)] - ens.j_par[(i, j)]).abs(),
        Ranking::AbsJperp => ens.j_perp[(i, j)].abs(),
    }
}

/// The center followed by its `cluster_size - 1` highest-ranked partners,
/// ties broken toward the lower index.
pub fn build_cluster(i: usize, ens: &SpinEnsemble, cfg: &MaceConfig) -> Result<Vec<usize>> {
    let n = ens.len();
    if cfg.cluster_size < 2 {
        return Err(Error::invalid("cluster size must be at least 2"));
    }
    if n < cfg.cluster_size {
        return Err(Error::invalid(format!(
            "cluster size {} exceeds the {} available spins",
            cfg.cluster_size, n
        )));
    }
    if i >= n {
        return Err(Error::invalid(format!("spin index {i} out of range")));
    }
    let mut others: Vec<(usize, f64)> = (0..n)
        .filter(|&j| j != i)
        .map(|j| (j, metric(ens, cfg.ranking, i, j)))
        .collect();
    others.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut cluster = Vec::with_capacity(cfg.cluster_size);
    cluster.push(i);
    cluster.extend(others.iter().take(cfg.cluster_size - 1).map(|&(j, _)| j));
    Ok(cluster)
}

pub fn cluster_membership(ens: &SpinEnsemble, cfg: &MaceConfig) -> Result<Vec<Vec<usize>>> {
    (0..ens.len()).map(|i| build_cluster(i, ens, cfg)).collect()
}

/// `center,members` with members separated by spaces, center first.
pub fn write_clusters_csv<W: Write>(clusters: &[Vec<usize>], mut w: W) -> Result<()> {
    writeln!(w, "center,members")?;
    for c in clusters {
        let members: Vec<String> = c.iter().map(|m| m.to_string()).collect();
        writeln!(w, "{},{}", c[0], members.join(" "))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MaceRun {
    pub trace: MagnetizationTrace,
    /// `center_values[i][t]`: `<s_x^i>` from the cluster centered on `i`.
    pub center_values: Vec<Vec<f64>>,
    pub clusters: Vec<Vec<usize>>,
}

pub fn run_mace_detailed(
    ens: &SpinEnsemble,
    grid: &TimeGrid,
    cfg: &MaceConfig,
    conv: &FrequencyConvention,
) -> Result<MaceRun> {
    if cfg.cluster_size > cfg.n_max {
        return Err(Error::DimensionExceeded {
            n: cfg.cluster_size,
            n_max: cfg.n_max,
        });
    }
    let clusters = cluster_membership(ens, cfg)?;
    // Clusters with the same member set are one evolution; the center value
    // does not depend on the member ordering.
    let mut distinct: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for c in &clusters {
        let mut key = c.clone();
        key.sort_unstable();
        let next = distinct.len();
        distinct.entry(key).or_insert(next);
    }
    let mut keys: Vec<(usize, Vec<usize>)> = distinct.iter().map(|(k, &v)| (v, k.clone())).collect();
    keys.sort_by_key(|(v, _)| *v);
    let mut plan = EdPlan::for_size(cfg.cluster_size);
    plan.n_max = cfg.n_max;
    let runs: Vec<Vec<Vec<f64>>> = keys
        .par_iter()
        .map(|(_, members)| {
            run_ed_detailed(&ens.subset(members), grid, &plan, conv).map(|r| r.per_spin)
        })
        .collect::<Result<_>>()?;

    let center_values: Vec<Vec<f64>> = clusters
        .iter()
        .map(|c| {
            let i = c[0];
            let mut key = c.clone();
            key.sort_unstable();
            let slot = distinct[&key];
            let pos = key.iter().position(|&m| m == i).expect("center in cluster");
            runs[slot][pos].clone()
        })
        .collect();
    let n = ens.len() as f64;
    let values = (0..grid.len())
        .map(|t| center_values.iter().map(|v| v[t]).sum::<f64>() / n)
        .collect();
    Ok(MaceRun {
        trace: MagnetizationTrace::new(grid.clone(), values, None, Engine::Mace),
        center_values,
        clusters,
    })
}

pub fn run_mace(
    ens: &SpinEnsemble,
    grid: &TimeGrid,
    cfg: &MaceConfig,
    conv: &FrequencyConvention,
) -> Result<MagnetizationTrace> {
    Ok(run_mace_detailed(ens, grid, cfg, conv)?.trace)
}

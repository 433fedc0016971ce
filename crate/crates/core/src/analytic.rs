//! Closed-form magnetization engines: the exact Ising product of cosines and
//! the isolated-pair approximation.

use rayon::prelude::*;

use crate::convention::FrequencyConvention;
use crate::couplings::{pair_frequency_matrix, SpinEnsemble};
use crate::error::{Error, Result};
use crate::trace::{Engine, MagnetizationTrace, TimeGrid};

/// `(1/2N) sum_i prod_{j != i} cos(kappa J_par_ij t)`.
pub fn emch_radin(
    ens: &SpinEnsemble,
    grid: &TimeGrid,
    conv: &FrequencyConvention,
) -> Result<MagnetizationTrace> {
    if ens.j_perp.iter().any(|&x| x != 0.0) {
        return Err(Error::NotIsing);
    }
    let n = ens.len();
    if n == 0 {
        return Err(Error::invalid("empty ensemble"));
    }
    let freqs = &ens.j_par * conv.kappa;
    let values = grid
        .times()
        .par_iter()
        .map(|&t| {
            let mut acc = 0.0;
            for i in 0..n {
                let mut prod = 1.0;
                for j in 0..n {
                    if j != i {
                        prod *= (freqs[(i, j)] * t).cos();
                    }
                }
                acc += prod;
            }
            0.5 * acc / n as f64
        })
        .collect();
    Ok(MagnetizationTrace::new(grid.clone(), values, None, Engine::EmchRadin))
}

/// Index of the partner of `i` with the largest `|J_perp - J_par|`; ties go
/// to the lower index.
pub fn strongest_partner(ens: &SpinEnsemble, i: usize) -> Option<usize> {
    let n = ens.len();
    let mut best: Option<(usize, f64)> = None;
    for j in (0..n).filter(|&j| j != i) {
        let f = (ens.j_perp[(i, j)] - ens.j_par[(i, j)]).abs();
        if best.is_none_or(|(_, b)| f > b) {
            best = Some((j, f));
        }
    }
    best.map(|(j, _)| j)
}

/// `(1/2N) sum_i cos(kappa f_i t)` with `f_i` the pair frequency of spin `i`
/// and its strongest partner.
pub fn pair_model(
    ens: &SpinEnsemble,
    grid: &TimeGrid,
    conv: &FrequencyConvention,
) -> Result<MagnetizationTrace> {
    let n = ens.len();
    if n < 2 {
        return Err(Error::invalid("pair model needs at least two spins"));
    }
    let f = pair_frequency_matrix(ens);
    let freqs: Vec<f64> = (0..n)
        .map(|i| {
            let j = strongest_partner(ens, i).expect("n >= 2");
            conv.kappa * f[(i, j)]
        })
        .collect();
    let values = grid
        .times()
        .par_iter()
        .map(|&t| 0.5 * freqs.iter().map(|w| (w * t).cos()).sum::<f64>() / n as f64)
        .collect();
    Ok(MagnetizationTrace::new(grid.clone(), values, None, Engine::Pair))
}

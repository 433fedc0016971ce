//! Coupling matrices for the Ising, XX and XXZ families and the scalar
//! coupling statistics used to rescale time.
//!
//! Coupling constants are given as `C/2pi` in MHz um^a. Stored matrices are
//! angular frequencies in rad/us, `J = 2pi C / r^a`.

use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance_sq, Positions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Ising,
    Xx,
    Xxz,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Ising => "ising",
            ModelFamily::Xx => "xx",
            ModelFamily::Xxz => "xxz",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `J_par = 2pi C6_par / r^6`, `J_perp = 0`.
    Ising { c6_par_mhz: f64 },
    /// Dipolar exchange `J_perp = 2pi C3 (1 - 3cos^2 theta) / r^3`, `J_par = 0`.
    Xx {
        c3_perp_mhz: f64,
        quantization_axis: [f64; 3],
    },
    /// Isotropic van der Waals exchange with `J_par = delta * J_perp`.
    Xxz {
        c6_perp_mhz: f64,
        anisotropy_delta: f64,
    },
}

impl ModelSpec {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelSpec::Ising { .. } => ModelFamily::Ising,
            ModelSpec::Xx { .. } => ModelFamily::Xx,
            ModelSpec::Xxz { .. } => ModelFamily::Xxz,
        }
    }

    pub fn exponent(&self) -> i32 {
        match self {
            ModelSpec::Xx { .. } => 3,
            ModelSpec::Ising { .. } | ModelSpec::Xxz { .. } => 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |x: f64, what: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be finite")))
            }
        };
        match self {
            ModelSpec::Ising { c6_par_mhz } => finite(*c6_par_mhz, "C6_par"),
            ModelSpec::Xx {
                c3_perp_mhz,
                quantization_axis,
            } => {
                finite(*c3_perp_mhz, "C3_perp")?;
                let norm = quantization_axis.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "quantization axis must have unit norm, got {norm}"
                    )));
                }
                Ok(())
            }
            ModelSpec::Xxz {
                c6_perp_mhz,
                anisotropy_delta,
            } => {
                finite(*c6_perp_mhz, "C6_perp")?;
                finite(*anisotropy_delta, "anisotropy delta")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    Perp,
    Par,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinEnsemble {
    pub positions: Positions,
    pub family: ModelFamily,
    /// Exchange couplings, rad/us.
    pub j_perp: DMatrix<f64>,
    /// Ising couplings, rad/us.
    pub j_par: DMatrix<f64>,
}

impl SpinEnsemble {
    /// Wraps explicit coupling matrices, checking symmetry, zero diagonal and
    /// consistency with `family`.
    pub fn from_matrices(
        positions: Positions,
        family: ModelFamily,
        j_perp: DMatrix<f64>,
        j_par: DMatrix<f64>,
    ) -> Result<Self> {
        let n = j_perp.nrows();
        if j_perp.shape() != (n, n) || j_par.shape() != (n, n) {
            return Err(Error::invalid("coupling matrices must be square and equal-sized"));
        }
        if !positions.is_empty() && positions.len() != n {
            return Err(Error::invalid("positions and couplings disagree on spin count"));
        }
        for m in [&j_perp, &j_par] {
            for i in 0..n {
                if m[(i, i)] != 0.0 {
                    return Err(Error::invalid("coupling diagonal must be zero"));
                }
                for j in 0..i {
                    if m[(i, j)] != m[(j, i)] || !m[(i, j)].is_finite() {
                        return Err(Error::invalid("coupling matrices must be finite and symmetric"));
                    }
                }
            }
        }
        match family {
            ModelFamily::Ising if j_perp.iter().any(|&x| x != 0.0) => {
                return Err(Error::invalid("ising ensemble must have zero exchange couplings"))
            }
            ModelFamily::Xx if j_par.iter().any(|&x| x != 0.0) => {
                return Err(Error::invalid("xx ensemble must have zero Ising couplings"))
            }
            _ => {}
        }
        Ok(Self {
            positions,
            family,
            j_perp,
            j_par,
        })
    }

    pub fn len(&self) -> usize {
        self.j_perp.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matrix(&self, which: CouplingKind) -> &DMatrix<f64> {
        match which {
            CouplingKind::Perp => &self.j_perp,
            CouplingKind::Par => &self.j_par,
        }
    }

    /// The ensemble restricted to `members`, in that order.
    pub fn subset(&self, members: &[usize]) -> SpinEnsemble {
        let c = members.len();
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(c, c, |a, b| m[(members[a], members[b])]);
        let coords = if self.positions.is_empty() {
            Vec::new()
        } else {
            members.iter().map(|&i| self.positions.coords[i]).collect()
        };
        SpinEnsemble {
            positions: Positions {
                coords,
                seed_used: self.positions.seed_used,
            },
            family: self.family,
            j_perp: pick(&self.j_perp),
            j_par: pick(&self.j_par),
        }
    }

    /// Writes `i,j,value` for every off-diagonal entry of one matrix.
    pub fn write_coupling_csv<W: Write>(&self, which: CouplingKind, mut w: W) -> Result<()> {
        let m = self.matrix(which);
        writeln!(w, "i,j,value_rad_per_us")?;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if i != j {
                    writeln!(w, "{i},{j},{}", m[(i, j)])?;
                }
            }
        }
        Ok(())
    }
}

pub fn build_couplings(pos: &Positions, model: &ModelSpec) -> Result<SpinEnsemble> {
    model.validate()?;
    let n = pos.len();
    let mut j_perp = DMatrix::zeros(n, n);
    let mut j_par = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let a = &pos.coords[i];
            let b = &pos.coords[j];
            let r2 = distance_sq(a, b);
            if r2 == 0.0 {
                return Err(Error::CoincidentSpins { i, j });
            }
            let (perp, par) = match *model {
                ModelSpec::Ising { c6_par_mhz } => (0.0, TAU * c6_par_mhz / (r2 * r2 * r2)),
                ModelSpec::Xx {
                    c3_perp_mhz,
                    quantization_axis: q,
                } => {
                    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                    let proj = d[0] * q[0] + d[1] * q[1] + d[2] * q[2];
                    let cos2 = proj * proj / r2;
                    let r3 = r2 * r2.sqrt();
                    (TAU * c3_perp_mhz * (1.0 - 3.0 * cos2) / r3, 0.0)
                }
                ModelSpec::Xxz {
                    c6_perp_mhz,
                    anisotropy_delta,
                } => {
                    let perp = TAU * c6_perp_mhz / (r2 * r2 * r2);
                    (perp, anisotropy_delta * perp)
                }
            };
            j_perp[(i, j)] = perp;
            j_perp[(j, i)] = perp;
            j_par[(i, j)] = par;
            j_par[(j, i)] = par;
        }
    }
    Ok(SpinEnsemble {
        positions: pos.clone(),
        family: model.family(),
        j_perp,
        j_par,
    })
}

/// Row means of `|m|`, normalized by the full spin count.
fn mean_abs_rows(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() as f64;
    m.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>() / n)
        .collect()
}

pub fn mean_abs_coupling_per_spin(ens: &SpinEnsemble, which: CouplingKind) -> Result<Vec<f64>> {
    if ens.len() < 2 {
        return Err(Error::invalid("coupling statistics need at least two spins"));
    }
    Ok(mean_abs_rows(ens.matrix(which)))
}

/// Median with the lower central value for even lengths.
pub fn lower_median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(sorted.len() - 1) / 2]
}

pub fn median_coupling(ens: &SpinEnsemble, which: CouplingKind) -> Result<f64> {
    Ok(lower_median(&mean_abs_coupling_per_spin(ens, which)?))
}

/// `J_perp - J_par`, the oscillation frequency of an isolated pair (up to the
/// convention prefactor).
pub fn pair_frequency_matrix(ens: &SpinEnsemble) -> DMatrix<f64> {
    &ens.j_perp - &ens.j_par
}

/// Median ensemble frequencies carried alongside traces for rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianFrequencies {
    /// Median over spins of `(1/N) sum_j |J_perp_ij|`, rad/us.
    pub perp: f64,
    /// Median over spins of `(1/N) sum_j |J_par_ij|`, rad/us.
    pub par: f64,
    /// Median over spins of `(1/N) sum_j |J_perp_ij - J_par_ij|`, rad/us.
    pub pair: f64,
}

impl MedianFrequencies {
    pub fn from_ensemble(ens: &SpinEnsemble) -> Result<Self> {
        if ens.len() < 2 {
            return Err(Error::invalid("coupling statistics need at least two spins"));
        }
        Ok(Self {
            perp: median_coupling(ens, CouplingKind::Perp)?,
            par: median_coupling(ens, CouplingKind::Par)?,
            pair: lower_median(&mean_abs_rows(&pair_frequency_matrix(ens))),
        })
    }

    /// Component-wise mean over realizations.
    pub fn mean(items: &[MedianFrequencies]) -> Option<Self> {
        if items.is_empty() {
            return None;
        }
        let k = items.len() as f64;
        Some(Self {
            perp: items.iter().map(|m| m.perp).sum::<f64>() / k,
            par: items.iter().map(|m| m.par).sum::<f64>() / k,
            pair: items.iter().map(|m| m.pair).sum::<f64>() / k,
        })
    }
}

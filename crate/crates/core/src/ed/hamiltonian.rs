use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::convention::FrequencyConvention;
use crate::couplings::SpinEnsemble;
use crate::error::{Error, Result};

/// XXZ Hamiltonian in the little-endian `sz` product basis (bit `k` of the
/// index is spin `k`, bit value 1 is up), stored implicitly as a diagonal
/// plus a list of flip-flop bonds.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    n: usize,
    diag: Vec<f64>,
    /// `(mask of the two spins, amplitude)`; the bond swaps anti-aligned pairs.
    bonds: Vec<(usize, f64)>,
}

/// Builds `scale * sum_{i<j} [J_perp/2 (s+ s- + s- s+) + J_par sz sz]`.
pub(crate) fn assemble(
    j_perp: &nalgebra::DMatrix<f64>,
    j_par: &nalgebra::DMatrix<f64>,
    scale: f64,
) -> Hamiltonian {
    let n = j_perp.nrows();
    let dim = 1usize << n;
    let mut diag = vec![0.0; dim];
    let mut bonds = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let jz = scale * j_par[(i, j)];
            if jz != 0.0 {
                for (b, d) in diag.iter_mut().enumerate() {
                    let aligned = ((b >> i) & 1) == ((b >> j) & 1);
                    *d += if aligned { 0.25 * jz } else { -0.25 * jz };
                }
            }
            let jx = scale * j_perp[(i, j)];
            if jx != 0.0 {
                bonds.push(((1usize << i) | (1usize << j), 0.5 * jx));
            }
        }
    }
    Hamiltonian { n, diag, bonds }
}

pub fn build_hamiltonian(
    ens: &SpinEnsemble,
    conv: &FrequencyConvention,
    n_max: usize,
) -> Result<Hamiltonian> {
    let n = ens.len();
    if n > n_max {
        return Err(Error::DimensionExceeded { n, n_max });
    }
    Ok(assemble(&ens.j_perp, &ens.j_par, conv.hamiltonian_scale()))
}

impl Hamiltonian {
    pub fn n_spins(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `H psi`.
    pub fn apply(&self, psi: &[Complex64], out: &mut [Complex64]) {
        for (o, (&d, &p)) in out.iter_mut().zip(self.diag.iter().zip(psi)) {
            *o = p * d;
        }
        for &(mask, amp) in &self.bonds {
            for (b, o) in out.iter_mut().enumerate() {
                let m = b & mask;
                // exactly one of the two spins up
                if m != 0 && m != mask {
                    *o += psi[b ^ mask] * amp;
                }
            }
        }
    }

    pub fn expectation(&self, psi: &[Complex64]) -> f64 {
        let mut h_psi = vec![Complex64::new(0.0, 0.0); psi.len()];
        self.apply(psi, &mut h_psi);
        psi.iter().zip(&h_psi).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// Real symmetric block on the listed basis states, which must be closed
    /// under the flip-flop term (a fixed-magnetization sector).
    pub(crate) fn block(&self, states: &[usize], position: &[usize]) -> DMatrix<f64> {
        let d = states.len();
        let mut m = DMatrix::zeros(d, d);
        for (col, &b) in states.iter().enumerate() {
            m[(col, col)] = self.diag[b];
            for &(mask, amp) in &self.bonds {
                let bits = b & mask;
                if bits != 0 && bits != mask {
                    m[(position[b ^ mask], col)] += amp;
                }
            }
        }
        m
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let all: Vec<usize> = (0..self.dim()).collect();
        self.block(&all, &all)
    }
}

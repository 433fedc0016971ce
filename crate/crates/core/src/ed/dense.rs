use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::hamiltonian::Hamiltonian;
use super::QuantumState;

struct Sector {
    states: Vec<usize>,
    energies: Vec<f64>,
    vectors: DMatrix<f64>,
}

/// Full spectrum of the Hamiltonian, diagonalized block by block in the
/// fixed-magnetization sectors.
pub struct SpectralPropagator {
    n: usize,
    sectors: Vec<Sector>,
}

/// Eigenbasis amplitudes of one state; evaluating it at many times only
/// costs the back-transformation.
pub struct Projected<'a> {
    propagator: &'a SpectralPropagator,
    coefficients: Vec<Vec<Complex64>>,
}

impl SpectralPropagator {
    pub fn new(h: &Hamiltonian) -> Self {
        let n = h.n_spins();
        let dim = h.dim();
        let mut by_sector: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        for b in 0..dim {
            by_sector[b.count_ones() as usize].push(b);
        }
        let mut position = vec![0usize; dim];
        for states in &by_sector {
            for (k, &b) in states.iter().enumerate() {
                position[b] = k;
            }
        }
        let sectors = by_sector
            .into_iter()
            .map(|states| {
                let eig = SymmetricEigen::new(h.block(&states, &position));
                Sector {
                    states,
                    energies: eig.eigenvalues.iter().copied().collect(),
                    vectors: eig.eigenvectors,
                }
            })
            .collect();
        Self { n, sectors }
    }

    pub fn project(&self, state: &QuantumState) -> Projected<'_> {
        let coefficients = self
            .sectors
            .iter()
            .map(|s| {
                let d = s.states.len();
                (0..d)
                    .map(|k| {
                        let col = s.vectors.column(k);
                        s.states
                            .iter()
                            .enumerate()
                            .map(|(row, &b)| state.amplitudes[b] * col[row])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        Projected {
            propagator: self,
            coefficients,
        }
    }

    pub fn evolve(&self, state: &QuantumState, t: f64) -> QuantumState {
        self.project(state).at(t)
    }
}

impl Projected<'_> {
    /// `exp(-i H t) psi`.
    pub fn at(&self, t: f64) -> QuantumState {
        let p = self.propagator;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << p.n];
        let mut phased = Vec::new();
        let mut block = Vec::new();
        for (s, c) in p.sectors.iter().zip(&self.coefficients) {
            phased.clear();
            phased.extend(
                s.energies
                    .iter()
                    .zip(c)
                    .map(|(&e, &ck)| ck * Complex64::from_polar(1.0, -e * t)),
            );
            block.clear();
            block.resize(s.states.len(), Complex64::new(0.0, 0.0));
            for (k, &ph) in phased.iter().enumerate() {
                for (out, &v) in block.iter_mut().zip(s.vectors.column(k).iter()) {
                    *out += ph * v;
                }
            }
            for (&b, &a) in s.states.iter().zip(&block) {
                amplitudes[b] = a;
            }
        }
        QuantumState {
            n: p.n,
            amplitudes,
        }
    }
}

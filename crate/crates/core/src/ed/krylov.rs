//! Lanczos propagation of `exp(-i H t) psi` in adaptive short steps.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::hamiltonian::Hamiltonian;
use super::QuantumState;
use crate::error::{Error, Result};

const MAX_KRYLOV_DIM: usize = 30;

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

struct Lanczos {
    basis: Vec<Vec<Complex64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Norm of the residual after the last basis vector; zero on breakdown.
    residual: f64,
}

fn lanczos(h: &Hamiltonian, v: &[Complex64], m_max: usize) -> Lanczos {
    let nrm = norm(v);
    let mut basis = vec![v.iter().map(|x| x / nrm).collect::<Vec<_>>()];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut w = vec![Complex64::new(0.0, 0.0); v.len()];
    let mut residual = 0.0;
    for k in 0..m_max {
        h.apply(&basis[k], &mut w);
        let a = dot(&basis[k], &w).re;
        alpha.push(a);
        // full reorthogonalization, twice
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let b = norm(&w);
        let scale = a.abs().max(beta.last().copied().unwrap_or(0.0)).max(1.0);
        if b <= 1e-12 * scale {
            residual = 0.0;
            break;
        }
        residual = b;
        if k + 1 == m_max {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    Lanczos {
        basis,
        alpha,
        beta,
        residual,
    }
}

/// Crude bound on the spectral radius, used for the first step size.
fn norm_bound(h: &Hamiltonian, probe: &[Complex64]) -> f64 {
    let mut w = vec![Complex64::new(0.0, 0.0); probe.len()];
    h.apply(probe, &mut w);
    (norm(&w) / norm(probe)).max(1e-12)
}

pub fn krylov_evolve(
    h: &Hamiltonian,
    state: &QuantumState,
    t: f64,
    tolerance: f64,
) -> Result<QuantumState> {
    if t == 0.0 {
        return Ok(state.clone());
    }
    let dim = h.dim();
    let m_max = MAX_KRYLOV_DIM.min(dim);
    let mut v = state.amplitudes.clone();
    let mut done = 0.0;
    let mut tau = (t).min(4.0 / norm_bound(h, &v));
    let min_step = t * 1e-13;

    while done < t {
        let lz = lanczos(h, &v, m_max);
        let m = lz.alpha.len();
        let tri = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                lz.alpha[i]
            } else if i + 1 == j {
                lz.beta[i]
            } else if j + 1 == i {
                lz.beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(tri);
        let q = &eig.eigenvectors;
        let nrm = norm(&v);
        let (y, step) = loop {
            let step = tau.min(t - done);
            let y: Vec<Complex64> = (0..m)
                .map(|k| {
                    (0..m)
                        .map(|l| {
                            Complex64::from_polar(q[(k, l)] * q[(0, l)], -eig.eigenvalues[l] * step)
                        })
                        .sum()
                })
                .collect();
            let err = lz.residual * y[m - 1].norm();
            if err <= tolerance * step / t {
                // grow cautiously when the step was easy
                if err < 0.1 * tolerance * step / t {
                    tau = step * 1.5;
                }
                break (y, step);
            }
            tau = step * 0.5;
            if tau < min_step {
                return Err(Error::KrylovConvergence {
                    tolerance,
                    step: tau,
                });
            }
        };
        let mut next = vec![Complex64::new(0.0, 0.0); dim];
        for (qk, &yk) in lz.basis.iter().zip(&y) {
            for (o, &x) in next.iter_mut().zip(qk) {
                *o += yk * nrm * x;
            }
        }
        v = next;
        done = if step >= t - done { t } else { done + step };
    }
    Ok(QuantumState {
        n: state.n,
        amplitudes: v,
    })
}

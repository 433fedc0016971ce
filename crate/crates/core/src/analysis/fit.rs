use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::MagnetizationTrace;

/// The default window opens where the magnetization first leaves the
/// early-time plateau.
pub const PLATEAU_THRESHOLD: f64 = 0.45;
pub const MIN_FIT_POINTS: usize = 5;
const AMPLITUDE: f64 = 0.5;
const SEED_FLOOR: f64 = 0.01;
/// Absolute gradient floor, reached on noiseless data.
const GRADIENT_TOLERANCE: f64 = 1e-12;
/// Largest cosine between the residual and a Jacobian column at a
/// stationary point of a noisy fit.
const COSINE_TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 500;
const BETA_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub tau: f64,
    pub beta: f64,
    /// Root mean square residual over the fitted points.
    pub residual_norm: f64,
    pub n_points_used: usize,
    /// Gradient of the least-squares cost fell below tolerance.
    pub converged: bool,
    pub iterations: usize,
    pub window: (f64, f64),
    pub seed_tau: f64,
    pub seed_beta: f64,
    /// Coefficient of determination of the `ln(-ln(2m))` vs `ln t` line;
    /// absent when fewer than two points qualify for the linearization.
    pub seed_r_squared: Option<f64>,
    /// Decades of time spanned by the linearization points.
    pub seed_decades: f64,
}

pub fn stretched_exponential(t: f64, tau: f64, beta: f64) -> f64 {
    AMPLITUDE * (-(t / tau).powf(beta)).exp()
}

/// From the first time with `m < 0.45` to the end of the trace.
pub fn default_window(trace: &MagnetizationTrace) -> Option<(f64, f64)> {
    let k = trace.values.iter().position(|&m| m < PLATEAU_THRESHOLD)?;
    Some((trace.times()[k], trace.grid.t_max()))
}

struct Seed {
    tau: f64,
    beta: f64,
    r_squared: Option<f64>,
    decades: f64,
}

fn linearized_seed(points: &[(f64, f64)]) -> Seed {
    let lin: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, m)| *m > SEED_FLOOR && *m < AMPLITUDE)
        .map(|&(t, m)| (t.ln(), (-(m / AMPLITUDE).ln()).ln()))
        .collect();
    if lin.len() < 2 {
        let mean_log = points.iter().map(|p| p.0.ln()).sum::<f64>() / points.len() as f64;
        return Seed {
            tau: mean_log.exp(),
            beta: 1.0,
            r_squared: None,
            decades: 0.0,
        };
    }
    let n = lin.len() as f64;
    let mx = lin.iter().map(|p| p.0).sum::<f64>() / n;
    let my = lin.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = lin.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = lin.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = lin.iter().map(|p| (p.1 - my).powi(2)).sum();
    let decades = (lin.last().unwrap().0 - lin[0].0) / std::f64::consts::LN_10;
    if sxx == 0.0 {
        return Seed {
            tau: lin[0].0.exp(),
            beta: 1.0,
            r_squared: None,
            decades,
        };
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    let beta = slope.clamp(1e-3, BETA_MAX);
    Seed {
        tau: (-intercept / slope).exp(),
        beta,
        r_squared: Some(r_squared),
        decades,
    }
    .sanitized()
}

impl Seed {
    fn sanitized(mut self) -> Self {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            self.tau = 1.0;
        }
        self
    }
}

/// Residuals and Jacobian with respect to `(ln tau, beta)`.
fn residuals(points: &[(f64, f64)], log_tau: f64, beta: f64, jac: Option<&mut Vec<[f64; 2]>>) -> Vec<f64> {
    let tau = log_tau.exp();
    let mut j = jac;
    if let Some(j) = j.as_deref_mut() {
        j.clear();
    }
    points
        .iter()
        .map(|&(t, m)| {
            let l = (t / tau).ln();
            let u = (beta * l).exp();
            let f = AMPLITUDE * (-u).exp();
            if let Some(j) = j.as_deref_mut() {
                j.push([f * beta * u, -f * u * l]);
            }
            f - m
        })
        .collect()
}

fn stationary(g: &[f64; 2], jtj: &[[f64; 2]; 2], r: &[f64]) -> bool {
    if g[0].abs().max(g[1].abs()) <= GRADIENT_TOLERANCE {
        return true;
    }
    let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    (0..2).all(|k| g[k].abs() <= COSINE_TOLERANCE * rn * jtj[k][k].sqrt())
}

fn cost(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

/// Least-squares fit of `0.5 exp(-(t/tau)^beta)` with the amplitude pinned,
/// seeded by the log-log linearization and refined by Levenberg–Marquardt.
pub fn fit_stretched_exponential(
    trace: &MagnetizationTrace,
    window: Option<(f64, f64)>,
) -> Result<FitResult> {
    let window = match window {
        Some(w) => w,
        None => default_window(trace).ok_or(Error::InsufficientPoints {
            found: 0,
            required: MIN_FIT_POINTS,
        })?,
    };
    if !(window.0 <= window.1) {
        return Err(Error::invalid("fit window must satisfy t_min <= t_max"));
    }
    let points: Vec<(f64, f64)> = trace
        .times()
        .iter()
        .zip(&trace.values)
        .filter(|(t, m)| **t > 0.0 && **t >= window.0 && **t <= window.1 && m.is_finite())
        .map(|(t, m)| (*t, *m))
        .collect();
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            found: points.len(),
            required: MIN_FIT_POINTS,
        });
    }

    let seed = linearized_seed(&points);
    let mut p = [seed.tau.ln(), seed.beta];
    let mut jac = Vec::with_capacity(points.len());
    let mut r = residuals(&points, p[0], p[1], Some(&mut jac));
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        let mut a = [[0.0; 2]; 2];
        let mut g = [0.0; 2];
        for (row, ri) in jac.iter().zip(&r) {
            for x in 0..2 {
                g[x] += row[x] * ri;
                for y in 0..2 {
                    a[x][y] += row[x] * row[y];
                }
            }
        }
        if stationary(&g, &a, &r) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        while lambda < 1e16 {
            let d0 = a[0][0] * (1.0 + lambda) + 1e-300;
            let d1 = a[1][1] * (1.0 + lambda) + 1e-300;
            let det = d0 * d1 - a[0][1] * a[1][0];
            let step = [
                -(d1 * g[0] - a[0][1] * g[1]) / det,
                -(d0 * g[1] - a[1][0] * g[0]) / det,
            ];
            let trial = [p[0] + step[0], p[1] + step[1]];
            if trial[1] > 0.0 && trial[1] <= BETA_MAX && step.iter().all(|s| s.is_finite()) {
                let rt = residuals(&points, trial[0], trial[1], None);
                let ct = cost(&rt);
                if ct <= c {
                    let stalled = (step[0].abs() + step[1].abs()) < 1e-15 * (1.0 + p[0].abs() + p[1].abs());
                    p = trial;
                    c = ct;
                    r = residuals(&points, p[0], p[1], Some(&mut jac));
                    lambda = (lambda * 0.1).max(1e-12);
                    accepted = !stalled;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            let mut g = [0.0; 2];
            let mut diag = [[0.0; 2]; 2];
            for (row, ri) in jac.iter().zip(&r) {
                for x in 0..2 {
                    g[x] += row[x] * ri;
                    diag[x][x] += row[x] * row[x];
                }
            }
            converged = stationary(&g, &diag, &r);
            break;
        }
    }
    Ok(FitResult {
        tau: p[0].exp(),
        beta: p[1],
        residual_norm: (2.0 * c / points.len() as f64).sqrt(),
        n_points_used: points.len(),
        converged,
        iterations,
        window,
        seed_tau: seed.tau,
        seed_beta: seed.beta,
        seed_r_squared: seed.r_squared,
        seed_decades: seed.decades,
    })
}

//! Discrete truncated Wigner approximation.
//!
//! Each trajectory starts from `s_x = 1/2` with `s_y, s_z` drawn
//! independently from `{+1/2, -1/2}` and follows the classical precession
//! `ds_i/dt = B_i x s_i`, `B_i = g (sum_j J_perp_ij s_x_j, sum_j J_perp_ij s_y_j,
//! sum_j J_par_ij s_z_j)` with `g` the Hamiltonian scale of the frequency
//! convention. The traced observable is the trajectory average of
//! `(1/N) sum_i s_x_i`.
//!
//! Trajectories are integrated in batches; the spin components of a batch are
//! the columns of one `N x 3K` matrix (`[x | y | z]` blocks), so the fields are
//! a pair of matrix products. Trajectory `k` draws its initial state from RNG
//! stream `k`, which makes results independent of thread scheduling.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convention::FrequencyConvention;
use crate::couplings::SpinEnsemble;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::trace::{Engine, MagnetizationTrace, TimeGrid};

/// Default fixed step as a fraction of the inverse fastest field.
pub const DEFAULT_STEP_FRACTION: f64 = 0.005;
pub const DEFAULT_RELATIVE_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_BATCH_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Rk4Fixed,
    Rk45Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwaConfig {
    pub n_trajectories: usize,
    pub integrator: Integrator,
    /// Step in us for `rk4_fixed`, relative tolerance for `rk45_adaptive`.
    /// `None` picks the default heuristic.
    pub dt_or_tol: Option<f64>,
    pub seed: u64,
    /// Trajectories integrated together. Part of the reproducibility
    /// contract: changing it may change the last bits of the result.
    pub batch_size: usize,
}

impl DtwaConfig {
    pub fn new(n_trajectories: usize, seed: u64) -> Self {
        Self {
            n_trajectories,
            integrator: Integrator::Rk4Fixed,
            dt_or_tol: None,
            seed,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trajectories == 0 {
            return Err(Error::invalid("n_trajectories must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if let Some(x) = self.dt_or_tol {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::invalid("dt_or_tol must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSpinState {
    pub spins: Vec<[f64; 3]>,
}

pub fn sample_initial<R: Rng>(n_spins: usize, rng: &mut R) -> ClassicalSpinState {
    let half = |b: bool| if b { 0.5 } else { -0.5 };
    let spins = (0..n_spins)
        .map(|_| {
            let y = half(rng.random());
            let z = half(rng.random());
            [0.5, y, z]
        })
        .collect();
    ClassicalSpinState { spins }
}

/// Time derivative of one classical configuration.
pub fn eom_rhs(
    state: &ClassicalSpinState,
    ens: &SpinEnsemble,
    conv: &FrequencyConvention,
) -> Vec<[f64; 3]> {
    let g = conv.hamiltonian_scale();
    let n = state.spins.len();
    (0..n)
        .map(|i| {
            let mut b = [0.0; 3];
            for (j, s) in state.spins.iter().enumerate() {
                b[0] += ens.j_perp[(i, j)] * s[0];
                b[1] += ens.j_perp[(i, j)] * s[1];
                b[2] += ens.j_par[(i, j)] * s[2];
            }
            let b = b.map(|x| g * x);
            let s = state.spins[i];
            [
                b[1] * s[2] - b[2] * s[1],
                b[2] * s[0] - b[0] * s[2],
                b[0] * s[1] - b[1] * s[0],
            ]
        })
        .collect()
}

/// Upper bound on `|B_i|` over spins for classical spins of length
/// `sqrt(3)/2`.
pub fn max_field(ens: &SpinEnsemble, conv: &FrequencyConvention) -> f64 {
    let g = conv.hamiltonian_scale();
    let n = ens.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| ens.j_perp[(i, j)].abs().max(ens.j_par[(i, j)].abs()))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
        * g
        * 0.75f64.sqrt()
}

/// The `rk4_fixed` step used when none is configured.
pub fn default_step(ens: &SpinEnsemble, conv: &FrequencyConvention, t_max: f64) -> f64 {
    let w = max_field(ens, conv);
    if w > 0.0 {
        DEFAULT_STEP_FRACTION / w
    } else {
        t_max.max(1.0)
    }
}

/// Batched right-hand side with preallocated field buffer.
struct Flow {
    n: usize,
    k: usize,
    j_perp: Option<DMatrix<f64>>,
    j_par: Option<DMatrix<f64>>,
    field: DMatrix<f64>,
}

impl Flow {
    fn new(ens: &SpinEnsemble, conv: &FrequencyConvention, k: usize) -> Self {
        let g = conv.hamiltonian_scale();
        let nonzero = |m: &DMatrix<f64>| m.iter().any(|&x| x != 0.0).then(|| m * g);
        let n = ens.len();
        Self {
            n,
            k,
            j_perp: nonzero(&ens.j_perp),
            j_par: nonzero(&ens.j_par),
            field: DMatrix::zeros(n, 3 * k),
        }
    }

    fn rhs(&mut self, s: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        let k = self.k;
        match &self.j_perp {
            Some(jp) => self
                .field
                .columns_mut(0, 2 * k)
                .gemm(1.0, jp, &s.columns(0, 2 * k), 0.0),
            None => self.field.columns_mut(0, 2 * k).fill(0.0),
        }
        match &self.j_par {
            Some(jz) => self
                .field
                .columns_mut(2 * k, k)
                .gemm(1.0, jz, &s.columns(2 * k, k), 0.0),
            None => self.field.columns_mut(2 * k, k).fill(0.0),
        }
        let b = &self.field;
        for c in 0..k {
            for i in 0..self.n {
                let (bx, by, bz) = (b[(i, c)], b[(i, k + c)], b[(i, 2 * k + c)]);
                let (sx, sy, sz) = (s[(i, c)], s[(i, k + c)], s[(i, 2 * k + c)]);
                out[(i, c)] = by * sz - bz * sy;
                out[(i, k + c)] = bz * sx - bx * sz;
                out[(i, 2 * k + c)] = bx * sy - by * sx;
            }
        }
    }
}

/// `y += a x`
fn axpy(y: &mut DMatrix<f64>, a: f64, x: &DMatrix<f64>) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += a * xi;
    }
}

struct Rk4Buffers {
    k1: DMatrix<f64>,
    k2: DMatrix<f64>,
    k3: DMatrix<f64>,
    k4: DMatrix<f64>,
    tmp: DMatrix<f64>,
}

impl Rk4Buffers {
    fn new(rows: usize, cols: usize) -> Self {
        let z = || DMatrix::zeros(rows, cols);
        Self {
            k1: z(),
            k2: z(),
            k3: z(),
            k4: z(),
            tmp: z(),
        }
    }
}

fn rk4_step(flow: &mut Flow, s: &mut DMatrix<f64>, h: f64, buf: &mut Rk4Buffers) {
    flow.rhs(s, &mut buf.k1);
    buf.tmp.copy_from(s);
    axpy(&mut buf.tmp, 0.5 * h, &buf.k1);
    flow.rhs(&buf.tmp, &mut buf.k2);
    buf.tmp.copy_from(s);
    axpy(&mut buf.tmp, 0.5 * h, &buf.k2);
    flow.rhs(&buf.tmp, &mut buf.k3);
    buf.tmp.copy_from(s);
    axpy(&mut buf.tmp, h, &buf.k3);
    flow.rhs(&buf.tmp, &mut buf.k4);
    axpy(s, h / 6.0, &buf.k1);
    axpy(s, h / 3.0, &buf.k2);
    axpy(s, h / 3.0, &buf.k3);
    axpy(s, h / 6.0, &buf.k4);
}

// Dormand-Prince 5(4) tableau; the system is autonomous so the nodes are
// not needed.
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Rk45 {
    stages: Vec<DMatrix<f64>>,
    tmp: DMatrix<f64>,
    err: DMatrix<f64>,
    h: f64,
}

impl Rk45 {
    fn new(rows: usize, cols: usize, h0: f64) -> Self {
        Self {
            stages: (0..7).map(|_| DMatrix::zeros(rows, cols)).collect(),
            tmp: DMatrix::zeros(rows, cols),
            err: DMatrix::zeros(rows, cols),
            h: h0,
        }
    }

    /// Advances `s` from `t0` to `t1` with shared step control across the
    /// batch.
    fn advance(&mut self, flow: &mut Flow, s: &mut DMatrix<f64>, t0: f64, t1: f64, tol: f64) -> Result<()> {
        let mut t = t0;
        while t < t1 {
            let h = self.h.min(t1 - t);
            if h < 1e-14 * t1.max(1.0) {
                return Err(Error::IntegratorDivergence { time: t, step: h });
            }
            flow.rhs(s, &mut self.stages[0]);
            for st in 1..7 {
                self.tmp.copy_from(s);
                for (prev, &a) in DP_A[st].iter().enumerate().take(st) {
                    if a != 0.0 {
                        axpy(&mut self.tmp, h * a, &self.stages[prev]);
                    }
                }
                flow.rhs(&self.tmp, &mut self.stages[st]);
            }
            // tmp holds the fifth-order solution (FSAL row)
            self.err.fill(0.0);
            for st in 0..7 {
                axpy(&mut self.err, h * (DP_B5[st] - DP_B4[st]), &self.stages[st]);
            }
            let mut ratio: f64 = 0.0;
            for (e, y) in self.err.iter().zip(self.tmp.iter()) {
                ratio = ratio.max(e.abs() / (tol * y.abs().max(0.5)));
            }
            if ratio <= 1.0 {
                s.copy_from(&self.tmp);
                t = if h >= t1 - t { t1 } else { t + h };
                let factor = if ratio == 0.0 {
                    5.0
                } else {
                    (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
                };
                // a step shortened to land on a grid point does not shrink
                // the proposal
                self.h = if h < self.h {
                    self.h.max(h * factor)
                } else {
                    h * factor
                };
            } else {
                if !ratio.is_finite() {
                    return Err(Error::IntegratorDivergence { time: t, step: h });
                }
                self.h = h * (0.9 * ratio.powf(-0.2)).clamp(0.1, 0.9);
            }
        }
        Ok(())
    }
}

/// Classical drift diagnostics, maxima over spins, trajectories and grid
/// times.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassicalDrift {
    /// `max | |s_i(t)| - |s_i(0)| |`.
    pub spin_norm: f64,
    /// `max | sum_i s_z_i(t) - sum_i s_z_i(0) |`.
    pub total_sz: f64,
}

#[derive(Debug, Clone)]
pub struct DtwaRun {
    pub trace: MagnetizationTrace,
    pub drift: ClassicalDrift,
    /// Step (rk4) or tolerance (rk45) actually used.
    pub dt_or_tol: f64,
}

struct BatchResult {
    /// `observables[traj][t]`
    observables: Vec<Vec<f64>>,
    drift: ClassicalDrift,
}

fn initial_batch(n: usize, seed: u64, first: usize, k: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(n, 3 * k);
    for c in 0..k {
        let mut rng = stream_rng(seed, (first + c) as u64);
        let st = sample_initial(n, &mut rng);
        for (i, v) in st.spins.iter().enumerate() {
            s[(i, c)] = v[0];
            s[(i, k + c)] = v[1];
            s[(i, 2 * k + c)] = v[2];
        }
    }
    s
}

fn integrate_batch(
    ens: &SpinEnsemble,
    grid: &TimeGrid,
    cfg: &DtwaConfig,
    conv: &FrequencyConvention,
    step: f64,
    mut s: DMatrix<f64>,
) -> Result<BatchResult> {
    let n = ens.len();
    let k = s.ncols() / 3;
    let mut flow = Flow::new(ens, conv, k);
    let norm0: Vec<f64> = (0..k)
        .flat_map(|c| {
            let s = &s;
            (0..n).map(move |i| {
                (s[(i, c)].powi(2) + s[(i, k + c)].powi(2) + s[(i, 2 * k + c)].powi(2)).sqrt()
            })
        })
        .collect();
    let sz0: Vec<f64> = (0..k).map(|c| s.column(2 * k + c).sum()).collect();
    let mut observables = vec![Vec::with_capacity(grid.len()); k];
    let mut drift = ClassicalDrift::default();
    let mut rk4 = Rk4Buffers::new(n, 3 * k);
    let mut rk45 = Rk45::new(n, 3 * k, step.min(grid.t_max().max(1e-300)));
    let mut now = 0.0;
    for &t in grid.times() {
        if t > now {
            match cfg.integrator {
                Integrator::Rk4Fixed => {
                    let span = t - now;
                    let steps = (span / step).ceil().max(1.0) as usize;
                    let h = span / steps as f64;
                    for _ in 0..steps {
                        rk4_step(&mut flow, &mut s, h, &mut rk4);
                    }
                }
                Integrator::Rk45Adaptive => {
                    let tol = cfg.dt_or_tol.unwrap_or(DEFAULT_RELATIVE_TOLERANCE);
                    rk45.advance(&mut flow, &mut s, now, t, tol)?;
                }
            }
            now = t;
        }
        for c in 0..k {
            observables[c].push(s.column(c).sum() / n as f64);
            let sz = s.column(2 * k + c).sum();
            drift.total_sz = drift.total_sz.max((sz - sz0[c]).abs());
            for i in 0..n {
                let r = (s[(i, c)].powi(2) + s[(i, k + c)].powi(2) + s[(i, 2 * k + c)].powi(2)).sqrt();
                drift.spin_norm = drift.spin_norm.max((r - norm0[c * n + i]).abs());
            }
        }
    }
    Ok(BatchResult { observables, drift })
}

pub fn run_dtwa_detailed(
    ens: &SpinEnsemble,
    grid: &TimeGrid,
    cfg: &DtwaConfig,
    conv: &FrequencyConvention,
) -> Result<DtwaRun> {
    cfg.validate()?;
    let n = ens.len();
    if n == 0 {
        return Err(Error::invalid("empty ensemble"));
    }
    let step = match cfg.integrator {
        Integrator::Rk4Fixed => cfg
            .dt_or_tol
            .unwrap_or_else(|| default_step(ens, conv, grid.t_max())),
        // initial trial step for the adaptive integrator
        Integrator::Rk45Adaptive => default_step(ens, conv, grid.t_max()) * 20.0,
    };
    let batches: Vec<(usize, usize)> = (0..cfg.n_trajectories)
        .step_by(cfg.batch_size)
        .map(|first| (first, cfg.batch_size.min(cfg.n_trajectories - first)))
        .collect();
    let results: Vec<BatchResult> = batches
        .par_iter()
        .map(|&(first, k)| {
            let s = initial_batch(n, cfg.seed, first, k);
            integrate_batch(ens, grid, cfg, conv, step, s)
        })
        .collect::<Result<_>>()?;

    let mut drift = ClassicalDrift::default();
    let obs: Vec<&Vec<f64>> = results
        .iter()
        .inspect(|r| {
            drift.spin_norm = drift.spin_norm.max(r.drift.spin_norm);
            drift.total_sz = drift.total_sz.max(r.drift.total_sz);
        })
        .flat_map(|r| r.observables.iter())
        .collect();
    let m = obs.len() as f64;
    let mut values = Vec::with_capacity(grid.len());
    let mut stderr = Vec::with_capacity(grid.len());
    for t in 0..grid.len() {
        let mean = obs.iter().map(|o| o[t]).sum::<f64>() / m;
        let se = if obs.len() > 1 {
            let var = obs.iter().map(|o| (o[t] - mean).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        } else {
            0.0
        };
        values.push(mean);
        stderr.push(se);
    }
    Ok(DtwaRun {
        trace: MagnetizationTrace::new(grid.clone(), values, Some(stderr), Engine::Dtwa),
        drift,
        dt_or_tol: match cfg.integrator {
            Integrator::Rk4Fixed => step,
            Integrator::Rk45Adaptive => cfg.dt_or_tol.unwrap_or(DEFAULT_RELATIVE_TOLERANCE),
        },
    })
}

pub fn run_dtwa(
    ens: &SpinEnsemble,
    grid: &TimeGrid,
    cfg: &DtwaConfig,
    conv: &FrequencyConvention,
) -> Result<MagnetizationTrace> {
    Ok(run_dtwa_detailed(ens, grid, cfg, conv)?.trace)
}

/// Integrates one classical configuration to time `t` with fixed RK4 steps
/// no longer than `max_step`.
pub fn evolve_classical(
    state: &ClassicalSpinState,
    ens: &SpinEnsemble,
    conv: &FrequencyConvention,
    t: f64,
    max_step: f64,
) -> ClassicalSpinState {
    let n = state.spins.len();
    let mut s = DMatrix::zeros(n, 3);
    for (i, v) in state.spins.iter().enumerate() {
        for a in 0..3 {
            s[(i, a)] = v[a];
        }
    }
    if t > 0.0 {
        let mut flow = Flow::new(ens, conv, 1);
        let mut buf = Rk4Buffers::new(n, 3);
        let steps = (t / max_step).ceil().max(1.0) as usize;
        let h = t / steps as f64;
        for _ in 0..steps {
            rk4_step(&mut flow, &mut s, h, &mut buf);
        }
    }
    ClassicalSpinState {
        spins: (0..n).map(|i| [s[(i, 0)], s[(i, 1)], s[(i, 2)]]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::emch_radin;
    use crate::couplings::{build_couplings, ModelFamily, ModelSpec};
    use crate::geometry::{sample_positions, CloudSpec, Positions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ensemble(model: ModelSpec, n: usize, seed: u64) -> SpinEnsemble {
        let pos = sample_positions(&CloudSpec::new([20.0; 3], n, 3.0, seed)).unwrap();
        build_couplings(&pos, &model).unwrap()
    }

    fn xxz(n: usize, seed: u64) -> SpinEnsemble {
        ensemble(
            ModelSpec::Xxz {
                c6_perp_mhz: 2e4,
                anisotropy_delta: -0.7,
            },
            n,
            seed,
        )
    }

    /// Grid reaching `units` inverse fastest fields.
    fn field_grid(ens: &SpinEnsemble, units: f64, count: usize) -> TimeGrid {
        let w = max_field(ens, &FrequencyConvention::default());
        TimeGrid::log(0.01 * units / w, units / w, count, true).unwrap()
    }

    fn stepped(ens: &SpinEnsemble, n: usize, seed: u64, fraction: f64) -> DtwaConfig {
        let w = max_field(ens, &FrequencyConvention::default());
        DtwaConfig {
            dt_or_tol: Some(fraction / w),
            ..DtwaConfig::new(n, seed)
        }
    }

    fn ising_pair(j: f64) -> SpinEnsemble {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, j, j, 0.0]);
        SpinEnsemble::from_matrices(
            Positions::from_coords(vec![]),
            ModelFamily::Ising,
            DMatrix::zeros(2, 2),
            m,
        )
        .unwrap()
    }

    /// All `4^n` discrete initial configurations, each with weight `4^-n`.
    fn all_configurations(n: usize) -> Vec<ClassicalSpinState> {
        (0..1usize << (2 * n))
            .map(|bits| ClassicalSpinState {
                spins: (0..n)
                    .map(|i| {
                        let y = if bits >> (2 * i) & 1 == 1 { 0.5 } else { -0.5 };
                        let z = if bits >> (2 * i + 1) & 1 == 1 { 0.5 } else { -0.5 };
                        [0.5, y, z]
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn initial_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let (mut y, mut yz) = (0.0, 0.0);
        for _ in 0..draws {
            let s = sample_initial(1, &mut rng).spins[0];
            assert_eq!(s[0], 0.5);
            assert_eq!(s[1].abs(), 0.5);
            assert_eq!(s[2].abs(), 0.5);
            y += s[1];
            yz += s[1] * s[2];
        }
        // sd of the mean: 0.5/sqrt(n) and 0.25/sqrt(n)
        let n = draws as f64;
        assert!((y / n).abs() < 5.0 * 0.5 / n.sqrt());
        assert!((yz / n).abs() < 5.0 * 0.25 / n.sqrt());
    }

    #[test]
    fn precession_hand_values() {
        let conv = FrequencyConvention::default();
        let ens = ising_pair(2.0);
        let state = ClassicalSpinState {
            spins: vec![[0.5, 0.5, -0.5], [0.5, -0.5, 0.5]],
        };
        let d = eom_rhs(&state, &ens, &conv);
        // d s_x^0 / dt = -J s_z^1 s_y^0
        assert!((d[0][0] - (-2.0 * 0.5 * 0.5)).abs() < 1e-15);
        assert!((d[0][1] - (2.0 * 0.5 * 0.5)).abs() < 1e-15);
        assert_eq!(d[0][2], 0.0);

        let free = SpinEnsemble::from_matrices(
            Positions::from_coords(vec![]),
            ModelFamily::Xxz,
            DMatrix::zeros(3, 3),
            DMatrix::zeros(3, 3),
        )
        .unwrap();
        let d = eom_rhs(&all_configurations(3)[5], &free, &conv);
        assert!(d.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn xxz_conserves_total_sz_rate() {
        let ens = xxz(6, 2);
        let conv = FrequencyConvention::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let s = sample_initial(6, &mut rng);
            let d = eom_rhs(&s, &ens, &conv);
            let rate: f64 = d.iter().map(|v| v[2]).sum();
            assert!(rate.abs() < 1e-12);
        }
    }

    #[test]
    fn batched_flow_matches_single() {
        let ens = xxz(5, 4);
        let conv = FrequencyConvention::default();
        let k = 3;
        let s = initial_batch(5, 11, 0, k);
        let mut flow = Flow::new(&ens, &conv, k);
        let mut out = DMatrix::zeros(5, 3 * k);
        flow.rhs(&s, &mut out);
        for c in 0..k {
            let st = sample_initial(5, &mut stream_rng(11, c as u64));
            let d = eom_rhs(&st, &ens, &conv);
            for i in 0..5 {
                for a in 0..3 {
                    assert!((out[(i, a * k + c)] - d[i][a]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sign_convention_matches_quantum_correlator() {
        // <s_z^0 s_y^1>(t) = sin(J t / 2) / 4 for an Ising pair from |->->>.
        let j = 1.3;
        let ens = ising_pair(j);
        let conv = FrequencyConvention::default();
        let configs = all_configurations(2);
        for t in [0.3, 1.0, 2.5] {
            let corr: f64 = configs
                .iter()
                .map(|c| {
                    let s = evolve_classical(c, &ens, &conv, t, 1e-3);
                    s.spins[0][2] * s.spins[1][1]
                })
                .sum::<f64>()
                / configs.len() as f64;
            assert!((corr - 0.25 * (0.5 * j * t).sin()).abs() < 1e-10, "t {t}: {corr}");
        }
    }

    #[test]
    fn exhaustive_ising_average_is_exact() {
        let ens = ensemble(ModelSpec::Ising { c6_par_mhz: 3e4 }, 4, 5);
        let conv = FrequencyConvention::default();
        let grid = TimeGrid::linear(0.0, 2.0, 5).unwrap();
        let exact = emch_radin(&ens, &grid, &conv).unwrap();
        let configs = all_configurations(4);
        let step = 0.02 / max_field(&ens, &conv);
        for (t, want) in grid.times().iter().zip(&exact.values) {
            let got: f64 = configs
                .iter()
                .map(|c| {
                    let s = evolve_classical(c, &ens, &conv, *t, step);
                    s.spins.iter().map(|v| v[0]).sum::<f64>() / 4.0
                })
                .sum::<f64>()
                / configs.len() as f64;
            assert!((got - want).abs() < 1e-9, "t {t}: {got} vs {want}");
        }
    }

    #[test]
    fn sampled_ising_within_three_sigma() {
        let ens = ensemble(ModelSpec::Ising { c6_par_mhz: 3e4 }, 8, 6);
        let conv = FrequencyConvention::default();
        let grid = field_grid(&ens, 20.0, 12);
        let exact = emch_radin(&ens, &grid, &conv).unwrap();
        let run = run_dtwa(&ens, &grid, &stepped(&ens, 4000, 21, 0.02), &conv).unwrap();
        let se = run.stderr.as_ref().unwrap();
        for k in 1..grid.len() {
            assert!(
                (run.values[k] - exact.values[k]).abs() <= 3.0 * se[k] + 1e-9,
                "t {}: {} vs {} (se {})",
                grid.times()[k],
                run.values[k],
                exact.values[k],
                se[k]
            );
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let ens = xxz(5, 7);
        let conv = FrequencyConvention::default();
        let s0 = sample_initial(5, &mut ChaCha8Rng::seed_from_u64(1));
        let t = 5.0 / max_field(&ens, &conv);
        let reference = evolve_classical(&s0, &ens, &conv, t, t / 2048.0);
        let err = |steps: f64| {
            let s = evolve_classical(&s0, &ens, &conv, t, t / steps);
            s.spins
                .iter()
                .zip(&reference.spins)
                .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
                .fold(0.0, f64::max)
        };
        let ratio = err(32.0) / err(64.0);
        assert!((ratio.log2() - 4.0).abs() < 0.3, "observed order {}", ratio.log2());
    }

    #[test]
    fn zero_couplings_stay_polarized() {
        let free = SpinEnsemble::from_matrices(
            Positions::from_coords(vec![]),
            ModelFamily::Xx,
            DMatrix::zeros(4, 4),
            DMatrix::zeros(4, 4),
        )
        .unwrap();
        let grid = TimeGrid::linear(0.0, 3.0, 4).unwrap();
        let run = run_dtwa(&free, &grid, &DtwaConfig::new(10, 0), &FrequencyConvention::default()).unwrap();
        assert!(run.values.iter().all(|&v| v == 0.5));
        assert!(run.stderr.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stderr_scales_inverse_sqrt() {
        let ens = xxz(6, 9);
        let conv = FrequencyConvention::default();
        let grid = field_grid(&ens, 30.0, 10);
        let mean_se = |n: usize| {
            let r = run_dtwa(&ens, &grid, &stepped(&ens, n, 5, 0.05), &conv).unwrap();
            let se = r.stderr.unwrap();
            se[5..].iter().sum::<f64>() / (se.len() - 5) as f64
        };
        let ratio = mean_se(400) / mean_se(1600);
        assert!((ratio - 2.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn conservation_and_batch_invariance() {
        let ens = xxz(6, 10);
        let conv = FrequencyConvention::default();
        let grid = field_grid(&ens, 50.0, 6);
        let cfg = stepped(&ens, 40, 3, 0.02);
        let a = run_dtwa_detailed(&ens, &grid, &cfg, &conv).unwrap();
        assert!(a.drift.total_sz < 1e-10, "{:?}", a.drift);
        assert!(a.drift.spin_norm < 1e-6, "{:?}", a.drift);
        let b = run_dtwa(&ens, &grid, &DtwaConfig { batch_size: 7, ..cfg.clone() }, &conv).unwrap();
        for (x, y) in a.trace.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
        let c = run_dtwa(&ens, &grid, &cfg, &conv).unwrap();
        assert_eq!(a.trace.values, c.values);
    }

    #[test]
    fn adaptive_matches_fixed() {
        let ens = xxz(6, 12);
        let conv = FrequencyConvention::default();
        let grid = field_grid(&ens, 20.0, 15);
        let fixed = run_dtwa(&ens, &grid, &DtwaConfig::new(16, 4), &conv).unwrap();
        let cfg = DtwaConfig {
            integrator: Integrator::Rk45Adaptive,
            dt_or_tol: Some(1e-10),
            ..DtwaConfig::new(16, 4)
        };
        let adaptive = run_dtwa(&ens, &grid, &cfg, &conv).unwrap();
        for (x, y) in fixed.values.iter().zip(&adaptive.values) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(DtwaConfig::new(0, 1).validate().is_err());
        assert!(DtwaConfig { batch_size: 0, ..DtwaConfig::new(1, 1) }.validate().is_err());
        assert!(DtwaConfig { dt_or_tol: Some(-1.0), ..DtwaConfig::new(1, 1) }.validate().is_err());
    }
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Failures are reported, not hidden: the process exits nonzero on any
//! failure only when `ACCEPTANCE_STRICT=1`, so a physics outcome that does
//! not hold is visible in the regular test log without aborting the run.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use spinrelax_cli::{pipeline, RunConfig};
use spinrelax_core::analysis::{fit_stretched_exponential, rescale_time, rescaling_frequency};
use spinrelax_core::dtwa::{max_field, run_dtwa_detailed};
use spinrelax_core::ed::{
    build_hamiltonian, calibrate_kappa, run_ed_detailed, EdRun, QuantumState, SpectralPropagator,
};
use spinrelax_core::rng::derive_seed;
use spinrelax_core::{
    build_couplings, emch_radin, measure_collapse, pair_model, run_ed, run_mace, sample_positions,
    CloudSpec, DtwaConfig, EdMethod, EdPlan, FrequencyConvention, MaceConfig, MagnetizationTrace,
    MedianFrequencies, ModelFamily, ModelSpec, Positions, RescaleMode, SpinEnsemble, TimeGrid,
};

type Outcome = Result<(bool, String), String>;

const PAPER_CLOUD: [f64; 3] = [65.0, 45.0, 45.0];
const C3_XX: f64 = 3140.0;
const C6: f64 = 8.0e5;

fn ising() -> ModelSpec {
    ModelSpec::Ising { c6_par_mhz: C6 }
}
fn xx() -> ModelSpec {
    ModelSpec::Xx {
        c3_perp_mhz: C3_XX,
        quantization_axis: [0.0, 0.0, 1.0],
    }
}
fn xxz() -> ModelSpec {
    ModelSpec::Xxz {
        c6_perp_mhz: C6,
        anisotropy_delta: -0.7,
    }
}

fn ensemble(model: &ModelSpec, cloud: CloudSpec) -> Result<SpinEnsemble, String> {
    let pos = sample_positions(&cloud).map_err(|e| e.to_string())?;
    build_couplings(&pos, model).map_err(|e| e.to_string())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn small_cloud(n: usize, seed: u64) -> CloudSpec {
    CloudSpec::new([20.0, 20.0, 20.0], n, 4.0, seed)
}

fn criterion_1() -> Outcome {
    let conv = FrequencyConvention::new(calibrate_kappa()).map_err(|e| e.to_string())?;
    let grid = TimeGrid::log(0.01, 30.0, 120, true).map_err(|e| e.to_string())?;
    let model = ModelSpec::Ising { c6_par_mhz: 2.0e3 };
    let mut worst = 0.0f64;
    for r in 0..10 {
        let ens = ensemble(&model, small_cloud(8, derive_seed(1, r)))?;
        let a = emch_radin(&ens, &grid, &conv).map_err(|e| e.to_string())?;
        let b = run_ed(&ens, &grid, &EdPlan::for_size(8), &conv).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&a.values, &b.values));
    }
    Ok((
        worst < 1e-10,
        format!("kappa={} max|ER-ED|={worst:.3e} over 10 ensembles (< 1e-10)", conv.kappa),
    ))
}

fn criterion_2() -> Outcome {
    let conv = FrequencyConvention::default();
    let ens = ensemble(&ModelSpec::Ising { c6_par_mhz: 2.0e3 }, small_cloud(8, 77))?;
    let w = max_field(&ens, &conv);
    let grid = TimeGrid::log(0.2 / w, 20.0 / w, 20, true).map_err(|e| e.to_string())?;
    let exact = emch_radin(&ens, &grid, &conv).map_err(|e| e.to_string())?;
    let run = |n: usize| {
        let cfg = DtwaConfig {
            dt_or_tol: Some(0.02 / w),
            ..DtwaConfig::new(n, 2024)
        };
        spinrelax_core::run_dtwa(&ens, &grid, &cfg, &conv).map_err(|e| e.to_string())
    };
    let big = run(10_000)?;
    let small = run(2_500)?;
    let se = big.stderr.as_ref().unwrap();
    let outside = (0..grid.len())
        .filter(|&k| (big.values[k] - exact.values[k]).abs() > 3.0 * se[k])
        .count();
    let rms = |v: &[f64]| (v[1..].iter().map(|x| x * x).sum::<f64>() / (v.len() - 1) as f64).sqrt();
    let ratio = rms(small.stderr.as_ref().unwrap()) / rms(se);
    Ok((
        outside == 0 && (ratio - 2.0).abs() <= 0.4,
        format!(
            "{outside}/{} grid points outside 3 stderr at 1e4 trajectories; stderr(2500)/stderr(10000)={ratio:.3} (2 +- 20%)",
            grid.len()
        ),
    ))
}

fn isolated_pairs(n: usize) -> SpinEnsemble {
    let mut j = DMatrix::zeros(n, n);
    for p in 0..n / 2 {
        let v = 0.7 + 0.9 * p as f64;
        j[(2 * p, 2 * p + 1)] = v;
        j[(2 * p + 1, 2 * p)] = v;
    }
    SpinEnsemble::from_matrices(Positions::from_coords(vec![]), ModelFamily::Xxz, j.clone(), &j * -0.7)
        .expect("valid pair ensemble")
}

fn criterion_3() -> Outcome {
    let conv = FrequencyConvention::default();
    let grid = TimeGrid::log(0.01, 30.0, 80, true).map_err(|e| e.to_string())?;
    let e = |x: spinrelax_core::Error| x.to_string();
    let mut d2 = 0.0f64;
    let mut dn = 0.0f64;
    for (k, model) in [xx(), xxz()].iter().enumerate() {
        let ens = ensemble(model, CloudSpec::new([30.0, 25.0, 25.0], 10, 5.0, 30 + k as u64))?;
        let pair = pair_model(&ens, &grid, &conv).map_err(e)?;
        let m2 = run_mace(&ens, &grid, &MaceConfig::new(2), &conv).map_err(e)?;
        d2 = d2.max(max_abs_diff(&pair.values, &m2.values));
        let ed = run_ed(&ens, &grid, &EdPlan::for_size(10), &conv).map_err(e)?;
        let mn = run_mace(&ens, &grid, &MaceConfig::new(10), &conv).map_err(e)?;
        dn = dn.max(max_abs_diff(&ed.values, &mn.values));
    }
    let mut dp = 0.0f64;
    for n in [4, 6] {
        let ens = isolated_pairs(n);
        let pair = pair_model(&ens, &grid, &conv).map_err(e)?;
        let ed = run_ed(&ens, &grid, &EdPlan::for_size(n), &conv).map_err(e)?;
        dp = dp.max(max_abs_diff(&pair.values, &ed.values));
    }
    Ok((
        d2 < 1e-12 && dn < 1e-8 && dp < 1e-12,
        format!("|MACE(2)-pair|={d2:.2e} (<1e-12), |MACE(10)-ED|={dn:.2e} (<1e-8), isolated pairs |pair-ED|={dp:.2e}"),
    ))
}

fn criterion_4() -> Outcome {
    let conv = FrequencyConvention::default();
    let e = |x: spinrelax_core::Error| x.to_string();
    let mut ed_worst = 0.0f64;
    for (k, model) in [ising(), xx(), xxz()].iter().enumerate() {
        let ens = ensemble(model, CloudSpec::new([25.0, 20.0, 20.0], 8, 5.0, 40 + k as u64))?;
        let m = MedianFrequencies::from_ensemble(&ens).map_err(e)?;
        let w = rescaling_frequency(&m, RescaleMode::FreqDifference);
        let grid = TimeGrid::log(0.01 / w, 100.0 / w, 40, true).map_err(e)?;
        for method in [EdMethod::DenseDiagonalization, EdMethod::KrylovStepping] {
            let plan = EdPlan {
                method,
                ..EdPlan::default()
            };
            let run: EdRun = run_ed_detailed(&ens, &grid, &plan, &conv).map_err(e)?;
            ed_worst = ed_worst
                .max(run.drift.norm)
                .max(run.drift.energy)
                .max(run.drift.total_sz);
        }
    }
    let (mut norm, mut sz) = (0.0f64, 0.0f64);
    for (k, model) in [ising(), xx(), xxz()].iter().enumerate() {
        let ens = ensemble(model, CloudSpec::new([25.0, 20.0, 20.0], 8, 5.0, 50 + k as u64))?;
        let w = max_field(&ens, &conv);
        let grid = TimeGrid::linear(0.0, 200.0 / w, 11).map_err(e)?;
        let cfg = DtwaConfig {
            dt_or_tol: Some(0.02 / w),
            ..DtwaConfig::new(64, 9)
        };
        let run = run_dtwa_detailed(&ens, &grid, &cfg, &conv).map_err(e)?;
        norm = norm.max(run.drift.spin_norm);
        sz = sz.max(run.drift.total_sz);
    }
    Ok((
        ed_worst < 1e-10 && norm < 1e-6 && sz < 1e-10,
        format!(
            "ED max drift (norm, energy, Sz; dense and krylov)={ed_worst:.2e} (<1e-10); DTWA rk4 dt=0.02/|B|max: spin-norm drift={norm:.2e} (<1e-6), total Sz drift={sz:.2e} (<1e-10)"
        ),
    ))
}

fn criterion_5() -> Outcome {
    let conv = FrequencyConvention::default();
    let e = |x: spinrelax_core::Error| x.to_string();
    let mut sum_abs = 0.0;
    let mut sum = 0.0;
    let realizations = 12;
    for r in 0..realizations {
        let ens = ensemble(&xxz(), CloudSpec::new([20.0, 20.0, 20.0], 8, 5.0, derive_seed(5, r)))?;
        let m = MedianFrequencies::from_ensemble(&ens).map_err(e)?;
        let w = rescaling_frequency(&m, RescaleMode::FreqDifference);
        let h = build_hamiltonian(&ens, &conv, 12).map_err(e)?;
        let prop = SpectralPropagator::new(&h);
        let projected = prop.project(&QuantumState::x_polarized(8));
        // late window: 100 to 1000 inverse median pair frequencies
        let samples = 2000;
        let avg = (0..samples)
            .map(|k| {
                let t = (100.0 + 900.0 * k as f64 / (samples - 1) as f64) / w;
                let s = projected.at(t);
                s.sx_per_spin().iter().sum::<f64>() / 8.0
            })
            .sum::<f64>()
            / samples as f64;
        sum_abs += avg.abs();
        sum += avg;
    }
    let mean_abs = sum_abs / realizations as f64;
    Ok((
        mean_abs < 0.02,
        format!(
            "{realizations} realizations, N=8 XXZ: mean |late-window <Sx>|={mean_abs:.4} (< 0.02), signed mean={:.4}",
            sum / realizations as f64
        ),
    ))
}

struct CollapseRun {
    traces: Vec<MagnetizationTrace>,
    seconds: f64,
}

fn collapse_config(family: &str, out: &Path) -> String {
    // grids cover rescaled times 1e-3 .. 45 for the typical median frequency
    // of each model at this geometry
    let (model, engine, w) = match family {
        "ising" => (
            format!("family = \"ising\"\nc6_par_mhz_um6_over_2pi = {C6:e}"),
            "kind = \"emch_radin\"".to_string(),
            0.124,
        ),
        "xx" => (
            format!("family = \"xx\"\nc3_perp_mhz_um3_over_2pi = {C3_XX:e}\nquantization_axis = [0.0, 0.0, 1.0]"),
            "kind = \"dtwa\"\nn_trajectories = 16\nbatch_size = 16\nstep_fraction = 0.1".to_string(),
            1.05,
        ),
        _ => (
            format!("family = \"xxz\"\nc6_perp_mhz_um6_over_2pi = {C6:e}\nanisotropy_delta = -0.7"),
            "kind = \"dtwa\"\nn_trajectories = 16\nbatch_size = 16\nstep_fraction = 0.1".to_string(),
            0.21,
        ),
    };
    format!(
        r#"master_seed = 20240601
n_realizations = 20
output_dir = "{out}"

[cloud]
dimensions_um = [{}, {}, {}]
n_spins = 100
r_blockade_um = 10.0

[model]
{model}

[grid]
t_min_us = {tmin:e}
t_max_us = {tmax:e}
count = 100
spacing = "log"
include_zero = true

[[engines]]
{engine}
"#,
        PAPER_CLOUD[0],
        PAPER_CLOUD[1],
        PAPER_CLOUD[2],
        out = out.join(family).display(),
        tmin = 1e-3 / w,
        tmax = 45.0 / w,
    )
}

fn run_collapse(out: &Path) -> Result<CollapseRun, String> {
    let start = Instant::now();
    let mut traces = Vec::new();
    for family in ["ising", "xx", "xxz"] {
        let cfg = RunConfig::from_toml(&collapse_config(family, out)).map_err(|e| e.to_string())?;
        let outcome = pipeline::run(&cfg).map_err(|e| e.to_string())?;
        traces.push(outcome.averaged.into_iter().next().unwrap());
    }
    Ok(CollapseRun {
        traces,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn rescaled(run: &CollapseRun, mode: RescaleMode) -> Result<Vec<MagnetizationTrace>, String> {
    run.traces
        .iter()
        .map(|t| rescale_time(t, t.medians.as_ref().unwrap(), mode).map_err(|e| e.to_string()))
        .collect()
}

fn criterion_6(run: &CollapseRun) -> Outcome {
    let fd = rescaled(run, RescaleMode::FreqDifference)?;
    let report = measure_collapse(&fd, Some((0.1, 30.0))).map_err(|e| e.to_string())?;
    let med: Vec<MedianFrequencies> = run.traces.iter().map(|t| t.medians.unwrap()).collect();
    let j = |m: &MedianFrequencies| m.perp.max(m.par);
    let ordered = j(&med[1]) > j(&med[2]) && j(&med[1]) > j(&med[0]);
    Ok((
        report.max_pairwise_deviation < 0.05 && ordered,
        format!(
            "N=100, 20 realizations, freq_difference, rescaled [0.1, 30]: max pairwise deviation={:.4} (< 0.05), rms spread={:.4}; J_med rad/us ising={:.4} xx={:.4} xxz={:.4} (xx largest: {ordered}); {:.0} s",
            report.max_pairwise_deviation,
            report.rms_spread,
            j(&med[0]),
            j(&med[1]),
            j(&med[2]),
            run.seconds
        ),
    ))
}

fn criterion_7(run: &CollapseRun) -> Outcome {
    let window = Some((0.1, 30.0));
    let fd = measure_collapse(&rescaled(run, RescaleMode::FreqDifference)?, window).map_err(|e| e.to_string())?;
    let mm = measure_collapse(&rescaled(run, RescaleMode::MaxMedian)?, window).map_err(|e| e.to_string())?;
    Ok((
        mm.max_pairwise_deviation > fd.max_pairwise_deviation,
        format!(
            "max deviation max_median={:.4} vs freq_difference={:.4} (max_median must be larger)",
            mm.max_pairwise_deviation, fd.max_pairwise_deviation
        ),
    ))
}

fn criterion_8(run: &CollapseRun) -> Outcome {
    let fd = rescaled(run, RescaleMode::FreqDifference)?;
    let names = ["ising", "xx", "xxz"];
    let mut ok = true;
    let mut parts = Vec::new();
    let mut betas = Vec::new();
    for (name, t) in names.iter().zip(&fd) {
        let f = fit_stretched_exponential(t, None).map_err(|e| e.to_string())?;
        let r2 = f.seed_r_squared.unwrap_or(0.0);
        ok &= f.converged && f.residual_norm < 0.02 && r2 > 0.99 && f.seed_decades >= 1.5;
        parts.push(format!(
            "{name}: beta={:.3} tau={:.4} rms={:.4} converged={} R2={:.4} over {:.2} decades",
            f.beta, f.tau, f.residual_norm, f.converged, r2, f.seed_decades
        ));
        betas.push(f.beta);
    }
    let spread = betas.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - betas.iter().cloned().fold(f64::INFINITY, f64::min);
    ok &= spread <= 0.1;
    parts.push(format!("beta spread={spread:.3} (<= 0.1)"));
    Ok((ok, parts.join("; ")))
}

fn crossing_time(t: &MagnetizationTrace, level: f64) -> Option<f64> {
    let ts = t.times();
    (1..t.len()).find(|&k| t.values[k] < level).map(|k| {
        let (t0, t1, m0, m1) = (ts[k - 1], ts[k], t.values[k - 1], t.values[k]);
        t0 + (t1 - t0) * (m0 - level) / (m0 - m1)
    })
}

fn criterion_9() -> Outcome {
    let conv = FrequencyConvention::default();
    let grid = TimeGrid::log(0.01, 300.0, 400, true).map_err(|e| e.to_string())?;
    let mut crossings = Vec::new();
    for r_bl in [8.3, 9.0, 10.0] {
        let mut avg = vec![0.0; grid.len()];
        let realizations = 20;
        for r in 0..realizations {
            let cloud = CloudSpec::new(PAPER_CLOUD, 100, r_bl, derive_seed(9, r));
            let ens = ensemble(&ising(), cloud)?;
            let t = emch_radin(&ens, &grid, &conv).map_err(|e| e.to_string())?;
            for (a, v) in avg.iter_mut().zip(&t.values) {
                *a += v / realizations as f64;
            }
        }
        let trace = MagnetizationTrace::new(grid.clone(), avg, None, spinrelax_core::Engine::EmchRadin);
        crossings.push(crossing_time(&trace, 0.45).ok_or("trace never crosses 0.45")?);
    }
    let increasing = crossings.windows(2).all(|w| w[1] > w[0]);
    Ok((
        increasing,
        format!(
            "Ising N=100, 20 realizations: t(m=0.45) us at r_bl 8.3/9/10 = {:.4}/{:.4}/{:.4} (strictly increasing)",
            crossings[0], crossings[1], crossings[2]
        ),
    ))
}

fn csv_files(root: &Path, base: &Path, out: &mut Vec<std::path::PathBuf>) {
    let mut entries: Vec<_> = fs::read_dir(root).unwrap().flatten().map(|e| e.path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            csv_files(&p, base, out);
        } else if p.extension().is_some_and(|x| x == "csv") {
            out.push(p.strip_prefix(base).unwrap().to_path_buf());
        }
    }
}

fn criterion_10(a: &Path, b: &Path) -> Outcome {
    let mut files = Vec::new();
    csv_files(a, a, &mut files);
    let mut other = Vec::new();
    csv_files(b, b, &mut other);
    if files != other {
        return Ok((false, "runs produced different file sets".into()));
    }
    let differing: Vec<_> = files
        .iter()
        .filter(|f| fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok())
        .collect();
    Ok((
        differing.is_empty() && !files.is_empty(),
        format!("{} CSV files compared, {} differ", files.len(), differing.len()),
    ))
}

fn report(id: usize, outcome: Outcome, seconds: f64, passed: &mut usize) {
    let (ok, detail) = match outcome {
        Ok(x) => x,
        Err(e) => (false, format!("error: {e}")),
    };
    if ok {
        *passed += 1;
    }
    println!("criterion {id:>2}: {} [{seconds:.1} s] {detail}", if ok { "PASS" } else { "FAIL" });
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, f64) {
    let start = Instant::now();
    let o = f();
    (o, start.elapsed().as_secs_f64())
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // `cargo test -- --list` and name filters from the default harness
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let mut passed = 0;
    let criteria: [fn() -> Outcome; 5] = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5];
    for (k, c) in criteria.iter().enumerate() {
        let (o, s) = timed(c);
        report(k + 1, o, s, &mut passed);
    }

    let dir = tempfile::tempdir().expect("temporary directory");
    let (a, b) = (dir.path().join("first"), dir.path().join("second"));
    let first = run_collapse(&a);
    match &first {
        Ok(run) => {
            let (o, s) = timed(|| criterion_6(run));
            report(6, o, s, &mut passed);
            let (o, s) = timed(|| criterion_7(run));
            report(7, o, s, &mut passed);
            let (o, s) = timed(|| criterion_8(run));
            report(8, o, s, &mut passed);
        }
        Err(e) => {
            for id in 6..=8 {
                report(id, Err(e.clone()), 0.0, &mut passed);
            }
        }
    }
    let (o, s) = timed(criterion_9);
    report(9, o, s, &mut passed);
    let (o, s) = timed(|| {
        first.as_ref().map_err(Clone::clone)?;
        run_collapse(&b)?;
        criterion_10(&a, &b)
    });
    report(10, o, s, &mut passed);

    println!("acceptance: {passed}/10 criteria passed");
    if passed < 10 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

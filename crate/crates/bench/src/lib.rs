//! Shared fixtures for the engine benchmarks.

use spinrelax_core::{build_couplings, sample_positions, CloudSpec, ModelSpec, SpinEnsemble};

pub const PAPER_CLOUD: [f64; 3] = [65.0, 45.0, 45.0];

pub fn xxz() -> ModelSpec {
    ModelSpec::Xxz {
        c6_perp_mhz: 8e5,
        anisotropy_delta: -0.7,
    }
}

pub fn ising() -> ModelSpec {
    ModelSpec::Ising { c6_par_mhz: 8e5 }
}

/// `n` spins at paper-like density: the cloud volume scales with `n`.
pub fn ensemble(model: &ModelSpec, n: usize, seed: u64) -> SpinEnsemble {
    let scale = (n as f64 / 100.0).cbrt();
    let dims = PAPER_CLOUD.map(|l| l * scale);
    let pos = sample_positions(&CloudSpec::new(dims, n, 10.0, seed)).expect("cloud fits");
    build_couplings(&pos, model).expect("distinct positions")
}

//! Disorder realizations: spin positions in a 3D cloud with a hard
//! minimum pair distance (blockade), placed by random sequential adsorption.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DensityProfile {
    /// Uniform over the box `[-L/2, L/2]` per axis.
    #[default]
    UniformBox,
    /// Gaussian with the extents taken as 1/e^2 full widths (sigma = L/4),
    /// truncated to the same box.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudSpec {
    /// Cloud extents in micrometers.
    pub dimensions: [f64; 3],
    pub n_target: usize,
    /// Minimum pair distance in micrometers.
    pub r_blockade: f64,
    #[serde(default)]
    pub density_profile: DensityProfile,
    pub seed: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u64,
}

fn default_attempts() -> u64 {
    DEFAULT_MAX_ATTEMPTS
}

impl CloudSpec {
    pub fn new(dimensions: [f64; 3], n_target: usize, r_blockade: f64, seed: u64) -> Self {
        Self {
            dimensions,
            n_target,
            r_blockade,
            density_profile: DensityProfile::UniformBox,
            seed,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dimensions.iter().all(|&d| d.is_finite() && d > 0.0) {
            return Err(Error::invalid("cloud dimensions must be strictly positive"));
        }
        if !(self.r_blockade.is_finite() && self.r_blockade >= 0.0) {
            return Err(Error::invalid("blockade radius must be non-negative"));
        }
        if self.n_target == 0 {
            return Err(Error::invalid("n_target must be at least 1"));
        }
        if self.max_attempts == 0 {
            return Err(Error::invalid("max_attempts must be positive"));
        }
        Ok(())
    }

    /// True if `p` lies inside the cloud box.
    pub fn contains(&self, p: &[f64; 3]) -> bool {
        p.iter()
            .zip(&self.dimensions)
            .all(|(&x, &l)| x >= -0.5 * l && x <= 0.5 * l)
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Option<[f64; 3]> {
        match self.density_profile {
            DensityProfile::UniformBox => {
                let mut p = [0.0; 3];
                for (x, &l) in p.iter_mut().zip(&self.dimensions) {
                    *x = (rng.random::<f64>() - 0.5) * l;
                }
                Some(p)
            }
            DensityProfile::Gaussian => {
                let mut p = [0.0; 3];
                for (x, &l) in p.iter_mut().zip(&self.dimensions) {
                    *x = 0.25 * l * standard_normal(rng);
                }
                self.contains(&p).then_some(p)
            }
        }
    }
}

/// Box-Muller; one of the pair is discarded so the stream consumption per
/// draw is fixed.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Positions {
    /// Micrometer coordinates, one entry per spin.
    pub coords: Vec<[f64; 3]>,
    pub seed_used: u64,
}

impl Positions {
    pub fn from_coords(coords: Vec<[f64; 3]>) -> Self {
        Self {
            coords,
            seed_used: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,z")?;
        for p in &self.coords {
            writeln!(w, "{},{},{}", p[0], p[1], p[2])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut coords = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 || line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("positions line {}: {e}", lineno + 1)))?;
            if vals.len() != 3 {
                return Err(Error::Parse(format!(
                    "positions line {}: expected 3 columns",
                    lineno + 1
                )));
            }
            coords.push([vals[0], vals[1], vals[2]]);
        }
        Ok(Self::from_coords(coords))
    }
}

pub(crate) fn distance_sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Random sequential adsorption: candidates are drawn from the density
/// profile and rejected if closer than the blockade radius to any accepted
/// spin. Accepted spins are never moved.
pub fn sample_positions(spec: &CloudSpec) -> Result<Positions> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, 0);
    let mut coords: Vec<[f64; 3]> = Vec::with_capacity(spec.n_target);
    let mut attempts = 0u64;
    while coords.len() < spec.n_target {
        if attempts >= spec.max_attempts {
            return Err(Error::Saturation {
                placed: coords.len(),
                target: spec.n_target,
                attempts,
            });
        }
        attempts += 1;
        let Some(candidate) = spec.draw(&mut rng) else {
            continue;
        };
        // Compared after the square root so the accepted set satisfies
        // min_pair_distance >= r_blockade without rounding slack.
        if coords
            .iter()
            .all(|p| distance_sq(p, &candidate).sqrt() >= spec.r_blockade)
        {
            coords.push(candidate);
        }
    }
    Ok(Positions {
        coords,
        seed_used: spec.seed,
    })
}

pub fn min_pair_distance(pos: &Positions) -> Result<f64> {
    if pos.len() < 2 {
        return Err(Error::invalid("min_pair_distance needs at least two spins"));
    }
    let mut best = f64::INFINITY;
    for (i, a) in pos.coords.iter().enumerate() {
        for b in &pos.coords[i + 1..] {
            best = best.min(distance_sq(a, b));
        }
    }
    Ok(best.sqrt())
}

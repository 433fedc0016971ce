//! Seed derivation for reproducible, schedule-independent random streams.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a 64-bit
//! seed and, where many independent units share one seed, a stream index.
//! Streams never depend on which thread consumes them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of child `index` from a parent seed.
///
/// Used for `(master_seed, realization)` and for the per-engine seeds inside
/// one realization. The map is a bijection in `parent` for fixed `index`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix(parent.wrapping_add(GOLDEN.wrapping_mul(index.wrapping_add(1))))
}

/// A generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

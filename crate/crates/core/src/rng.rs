//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`SeededRng`], which is
//! ChaCha with 8 rounds seeded from a `u64` via `seed_from_u64`. ChaCha's
//! output stream is specified independently of platform and word size, so a
//! given seed reproduces the same scenarios, populations and baselines
//! everywhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An independent stream derived from `seed`, used where one seed has to
/// drive several unrelated consumers (e.g. one stream per baseline trial).
pub fn seeded_stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

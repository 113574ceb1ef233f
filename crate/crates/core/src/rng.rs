//! Counter-based seed derivation.
//!
//! Every random draw in a run is keyed by `(master_seed, domain, index)`, so
//! any cycle can be regenerated in isolation and the result of a run does not
//! depend on how cycles are distributed over worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for all simulation draws.
pub type SimRng = ChaCha8Rng;

/// Stream domains. Keeping them distinct decorrelates e.g. the placement of
/// block 7 from the fading of cycle 7.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Placement = 1,
    Statics = 2,
    Cycle = 3,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for item `index` of `domain` under `master`.
///
/// This is the `index`-th output of a SplitMix64 sequence whose start is
/// itself a hash of `(master, domain)`.
pub fn child_seed(master: u64, domain: Domain, index: u64) -> u64 {
    let base = mix64(master ^ mix64(domain as u64));
    mix64(base.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Generator seeded from a plain integer seed.
pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

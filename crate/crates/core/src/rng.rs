//! Seed derivation for reproducible, order-independent random streams.
//!
//! Every stream in the crate is a `ChaCha8Rng` seeded from a 64-bit key
//! derived by mixing a parent seed with one or more indices. Two streams with
//! different index paths are statistically independent, and the value of a
//! stream never depends on the order in which other streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a parent seed with a path of indices into a child seed.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(parent), |acc, &p| {
        splitmix64(acc ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}

/// Random stream keyed by `(parent, path...)`.
pub fn stream(parent: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(parent, path))
}

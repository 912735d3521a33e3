//! Counter-based random variates.
//!
//! A variate is addressed by `(seed, domain, key)`: the seed and domain form
//! the ChaCha key, the `key` selects the stream. Drawing variate `k` never
//! depends on which other variates were drawn before it, so refinement order
//! and worker count cannot change a result.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Domain tags keep unrelated uses of one seed apart.
pub mod domain {
    pub const BASE_INCREMENT: u64 = 1;
    pub const BRIDGE_MIDPOINT: u64 = 2;
    pub const REPLICA_SEED: u64 = 3;
}

fn generator(seed: u64, domain: u64, key: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(bytes);
    rng.set_stream(key);
    rng
}

/// Standard normal variate addressed by `(seed, domain, key)`.
pub fn standard_normal(seed: u64, domain: u64, key: u64) -> f64 {
    StandardNormal.sample(&mut generator(seed, domain, key))
}

/// Independent seed for the `index`-th replica of an experiment seeded with
/// `seed`. `salt` separates sub-experiments sharing one seed.
pub fn replica_seed(seed: u64, salt: u64, index: u64) -> u64 {
    let mut rng = generator(seed, domain::REPLICA_SEED ^ (salt << 8), index);
    rng.next_u64()
}

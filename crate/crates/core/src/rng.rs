//! Counter-based random streams.
//!
//! Every replica draws from its own ChaCha8 stream selected by
//! `(seed, domain, replica index)`, so results never depend on which worker
//! ran which replica.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ReplicaRng = ChaCha8Rng;

/// Separates the random streams used by different parts of one experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Forward = 1,
    Dual = 2,
    Range = 3,
    Disorder = 4,
    Walkers = 5,
    Quenched = 6,
    Harness = 7,
}

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn key(seed: u64, domain: Domain) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut s = seed ^ splitmix64(domain as u64);
    for chunk in out.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ReplicaRng {
    let mut rng = ChaCha8Rng::from_seed(key(seed, domain));
    rng.set_stream(index);
    rng
}

/// Uniform in `[0, 1)` from a 64-bit hash.
#[inline]
pub fn unit_from_hash(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

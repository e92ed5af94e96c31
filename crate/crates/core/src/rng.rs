//! Named, counter-derived random streams.
//!
//! Every consumer of randomness draws from a stream keyed by
//! `(master seed, domain, a, b)`, so adding or removing one node never shifts
//! another node's draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

pub type StreamRng = ChaCha8Rng;

/// Domains separate independent uses of the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Scenario = 1,
    Sensing = 2,
    Channel = 3,
    Adversary = 4,
    Coordinator = 5,
    Selection = 6,
    Test = 99,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes the key into a 64-bit seed.
pub fn derive_seed(master: u64, domain: Domain, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ domain as u64);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b)
}

pub fn stream(master: u64, domain: Domain, a: u64, b: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, domain, a, b))
}

/// FNV-1a, used to turn topic names into stream keys.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Poisson draw; a zero or invalid rate yields zero.
pub fn poisson_count<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> usize {
    if !(lambda > 0.0) {
        return 0;
    }
    Poisson::new(lambda).map(|p| p.sample(rng) as usize).unwrap_or(0)
}

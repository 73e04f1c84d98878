//! Reproducible random streams keyed by `(seed, stream)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids for the distinct consumers of randomness.
pub mod streams {
    pub const TRUTH: u64 = 1;
    pub const DATA: u64 = 2;
    const CHAIN_BASE: u64 = 1 << 32;
    const REFIT_BASE: u64 = 2 << 32;

    /// Stream for BSSC/BHSC chain `c`.
    pub fn chain(c: u64) -> u64 {
        CHAIN_BASE + c
    }

    /// Stream for refitting chain `c`.
    pub fn refit(c: u64) -> u64 {
        REFIT_BASE + c
    }
}

/// ChaCha8 generator positioned on an explicit stream. Identical
/// `(seed, stream)` pairs yield identical sequences on every platform.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for SeededRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    #[inline]
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Seed for replicate `index` of a run seeded with `seed` (splitmix64 mix).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

//! Seedable, splittable random number generation.
//!
//! Every stochastic operation in the crate takes an explicit `&mut SeededRng`.
//! Independent streams are derived with [`SeededRng::split`], which mixes a
//! stream label into the parent seed instead of consuming parent state, so
//! adding a new consumer never perturbs existing streams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive an independent generator for the named stream.
    pub fn split(&self, stream: &str) -> Self {
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for b in stream.bytes() {
            h = splitmix64(h ^ u64::from(b));
        }
        Self::new(splitmix64(h))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

//! Deterministic random numbers.
//!
//! Every stochastic choice in the kit flows through `AmuseRng`, a
//! xoshiro256++ generator seeded splitmix-style from a 64-bit seed
//! (`Xoshiro256PlusPlus::seed_from_u64`). The generator is fixed here, by
//! name, so runs reproduce exactly for a given seed. Substreams (per epoch,
//! per parameter, per probe) are derived by mixing the parent seed with a
//! stream index through splitmix64 before reseeding, never by sharing one
//! generator across concerns.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

/// splitmix64 finalizer; used to derive substream seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Mixes a parent seed with a stream index into a fresh substream seed.
pub fn substream(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0xA5A5_5A5A_0F0F_F0F0)))
}

/// The kit's named deterministic generator.
pub struct AmuseRng {
    inner: Xoshiro256PlusPlus,
}

impl AmuseRng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    /// Substream keyed by (seed, stream index).
    pub fn for_stream(seed: u64, stream: u64) -> Self {
        Self::seed_from_u64(substream(seed, stream))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.random_range(lo..hi)
    }

    /// Standard normal.
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.random_range(0..=i);
            items.swap(i, j);
        }
    }

    /// Unit vector of the given dimension.
    pub fn unit_vector(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.normal()).collect();
            let n = crate::linalg::norm(&v);
            if n > 1e-12 {
                return v.iter().map(|x| x / n).collect();
            }
        }
    }
}

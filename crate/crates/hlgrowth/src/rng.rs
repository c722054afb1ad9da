//! Seeded random number generation with a frozen bit-stream contract.
//!
//! Replay and cross-machine determinism require that (algorithm, seed)
//! reproduce the exact same draws forever, so the angle and uniform
//! conversions are written out explicitly here instead of going through
//! `rand`'s distribution machinery (whose internals may change between
//! versions). The generator is ChaCha8, seeded via `seed_from_u64`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Name of the generator algorithm, persisted into run records so that a
/// replay can refuse records produced by a different stream.
pub const RNG_ALGORITHM: &str = "chacha8";

/// 2^-53, the spacing of the 53-bit uniform grid on [0, 1).
const U53: f64 = 1.0 / 9007199254740992.0;

/// Deterministic stream of simulation randomness for one seeded run.
#[derive(Debug, Clone)]
pub struct RunRng {
    inner: ChaCha8Rng,
}

impl RunRng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform angle in [0, 2π): the top 53 bits of one `u64` draw scaled to
    /// the circle. One draw per angle, independent of `rand` internals.
    pub fn uniform_angle(&mut self) -> f64 {
        let u = (self.inner.next_u64() >> 11) as f64 * U53;
        u * std::f64::consts::TAU
    }

    /// Uniform on (0, 1]: 53-bit grid shifted away from zero, safe for `ln`.
    pub fn uniform_open_closed(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) + 1) as f64 * U53
    }

    /// Exponential with the given rate, by inversion.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        debug_assert!(rate > 0.0);
        -self.uniform_open_closed().ln() / rate
    }

    /// Raw 64-bit draw (used for derived sub-seeds).
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

/// Derive the per-task seed for item `index` of a seeded family (one seed per
/// trajectory / grid point / render subsample). SplitMix64 finalizer on
/// (base, index): cheap, well-dispersed, and frozen by construction.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

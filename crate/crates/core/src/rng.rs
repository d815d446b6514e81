//! Seeded random number generation.
//!
//! All randomness in the crate flows through [`Rng`], a xoshiro256++
//! generator whose 256-bit state is expanded from a 64-bit seed with
//! SplitMix64. Both algorithms are fully specified and integer-only, so a
//! given seed yields the same stream on every platform. Normal deviates use
//! the Box–Muller transform on top of that stream.

use rand::{Rng as _, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Uniform draw on `[0, 1)` with 53 bits of precision.
pub fn unit(rng: &mut Rng) -> f64 {
    rng.gen::<f64>()
}

/// One standard normal deviate via Box–Muller (cosine branch only).
pub fn standard_normal(rng: &mut Rng) -> f64 {
    // 1 - u lies in (0, 1], keeping ln finite
    let u1 = 1.0 - unit(rng);
    let u2 = unit(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform index in `0..n`.
pub fn index(rng: &mut Rng, n: usize) -> usize {
    rng.gen_range(0..n)
}

/// Fisher–Yates shuffle.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}

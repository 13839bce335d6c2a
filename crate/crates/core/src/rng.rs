//! Seeded randomness. xoshiro256++ seeded through splitmix64, Gaussians by Box–Muller.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

/// `seed_from_u64` on xoshiro256++ expands the seed with splitmix64.
pub fn seeded(seed: u64) -> SimRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Independent stream derived from `seed` and a purpose tag.
pub fn stream(seed: u64, tag: u64) -> SimRng {
    seeded(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Standard normal draw (Box–Muller, cosine branch).
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    // u1 in (0, 1] so the log is finite.
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn normal(rng: &mut impl Rng, mean: f64, std: f64) -> f64 {
    mean + std * standard_normal(rng)
}

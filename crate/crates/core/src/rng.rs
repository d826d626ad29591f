//! Seeded random sources.
//!
//! Every stochastic operation takes the caller's random source explicitly.
//! Long-running loops derive an independent stream per step from
//! `(seed, stream)` so that resuming from a checkpoint replays the same draws.

use rand::{Rng, RngCore, SeedableRng};
pub use rand_chacha::ChaCha8Rng;

use crate::math;

/// A ChaCha8 generator seeded with `seed` on stream `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a label into a seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in `[lo, hi)`.
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Standard normal draw (Box-Muller, one output per call).
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    // 1 - u keeps the log argument in (0, 1].
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(core::f64::consts::TAU * u2)
}

/// Normal draw with standard deviation `std`, resampled until within two
/// standard deviations of zero.
pub fn truncated_normal<R: RngCore + ?Sized>(rng: &mut R, std: f64) -> f64 {
    loop {
        let z = standard_normal(rng);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

/// Unit-mean exponential draw.
pub fn exponential<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    -math::ln(1.0 - rng.gen::<f64>())
}

//! Seed derivation and the complex Gaussian sampler shared by every module.
//!
//! All randomness flows from a `u64` seed. Each consumer (geometry,
//! shadowing, pilots, channels, Monte Carlo oracle) owns a distinct ChaCha
//! stream, so changing one component never perturbs the draws of another.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Geometry = 1,
    Shadowing = 2,
    Pilots = 3,
    Channel = 4,
    Oracle = 5,
    OracleCentering = 6,
}

pub fn rng_for(seed: u64, stream: Stream) -> SimRng {
    rng_for_chunk(seed, stream, 0)
}

/// Stream for chunk `chunk` of a parallel Monte Carlo job.
pub fn rng_for_chunk(seed: u64, stream: Stream, chunk: u32) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) | chunk as u64);
    rng
}

/// Seed of realization `index` in a sweep started from `base`.
///
/// A splitmix64 finalizer decorrelates neighbouring bases and indices.
pub fn realization_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// CN(0, 1): real and imaginary parts i.i.d. N(0, 1/2).
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, hi: f64) -> f64 {
    use rand::RngExt;
    rng.random::<f64>() * hi
}

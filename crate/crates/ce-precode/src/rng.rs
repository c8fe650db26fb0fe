//! Seedable random number streams.
//!
//! Every Monte Carlo trial draws from its own ChaCha12 stream, derived from
//! `(master_seed, trial_index)`: the master seed fills the 256-bit key via the
//! usual SplitMix64 expansion and the trial index selects the ChaCha stream.
//! Results are therefore independent of how trials are distributed over
//! worker threads.
//!
//! Gaussian draws use Box-Muller with a fixed consumption order (two uniform
//! draws per complex sample, radius before angle), so identical seeds give
//! bit-identical samples on every platform.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::f64::consts::PI;

/// RNG for the `trial_index`-th stream of `master_seed`.
pub fn stream(master_seed: u64, trial_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

/// Uniform draw in `(0, 1]` (the open end avoids `ln(0)` in Box-Muller).
#[inline]
fn uniform_open<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.gen::<f64>()
}

/// One circularly-symmetric complex Gaussian sample with total variance
/// `variance` (each real dimension carries `variance / 2`).
///
/// Consumes exactly two uniform draws: radius first, then angle.
#[inline]
pub fn complex_gaussian<R: Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let u1 = uniform_open(rng);
    let u2: f64 = rng.gen();
    let r = (-variance * u1.ln()).sqrt();
    let phi = 2.0 * PI * u2 - PI;
    Complex64::new(r * phi.cos(), r * phi.sin())
}

/// One real standard-normal sample (two uniform draws, cosine branch only).
#[inline]
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1 = uniform_open(rng);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Uniform phase angle in `[-pi, pi)`.
#[inline]
pub fn uniform_phase<R: Rng>(rng: &mut R) -> f64 {
    PI * (2.0 * rng.gen::<f64>() - 1.0)
}

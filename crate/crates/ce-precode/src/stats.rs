//! Empirical validation of the probabilistic machinery behind MUI
//! suppression: the noise-free received vector under uniform random phases
//! approaches a Gaussian as N grows, and boxes around any symbol vector keep
//! strictly positive probability.

use crate::alphabet::Alphabet;
use crate::channel::{generate_channel, ChannelMatrix};
use crate::metrics::{estimate_mui, McParams, MuiEstimate};
use crate::rng;
use crate::{CeError, Result};
use crate::alphabet::EnergyAllocation;
use num_complex::Complex64;
use rayon::prelude::*;
use statrs::function::erf::erf;

/// One draw of the real/imaginary parts of the noise-free received vector
/// under uniform random phases, interleaved `(z_1^I, z_1^Q, ..., z_M^I, z_M^Q)`.
#[derive(Debug, Clone)]
pub struct ZSample {
    pub components: Vec<f64>,
}

/// A 2M-dimensional box of half-width `delta` around the scaled symbol
/// vector.
#[derive(Debug, Clone)]
pub struct BoxSpec {
    pub center: Vec<Complex64>,
    pub half_width: f64,
}

impl BoxSpec {
    pub fn new(center: Vec<Complex64>, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(CeError::Dimension("box half-width must be > 0".into()));
        }
        Ok(BoxSpec { center, half_width })
    }
}

fn z_from_phases(channel: &ChannelMatrix, phases: &[f64]) -> ZSample {
    let n = channel.num_antennas();
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let steering: Vec<Complex64> = phases
        .iter()
        .map(|&t| Complex64::from_polar(1.0, t))
        .collect();
    let mut components = Vec::with_capacity(2 * channel.num_users());
    for k in 0..channel.num_users() {
        let sum: Complex64 = channel
            .row(k)
            .iter()
            .zip(&steering)
            .map(|(h, e)| h * e)
            .sum();
        let z = sum * inv_sqrt_n;
        components.push(z.re);
        components.push(z.im);
    }
    ZSample { components }
}

/// Draws `count` samples of the received vector with i.i.d. uniform phases.
/// Each sample uses its own RNG stream derived from `(seed, index)`.
pub fn sample_z(channel: &ChannelMatrix, seed: u64, count: usize) -> Vec<ZSample> {
    let n = channel.num_antennas();
    (0..count as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = rng::stream(seed, idx + 1);
            let phases: Vec<f64> = (0..n).map(|_| rng::uniform_phase(&mut rng)).collect();
            z_from_phases(channel, &phases)
        })
        .collect()
}

/// Standard normal CDF.
fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// One-sample Kolmogorov-Smirnov distance of `samples` against a zero-mean
/// Gaussian with the given variance.
pub fn ks_distance_to_gaussian(samples: &[f64], variance: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let sd = variance.sqrt();
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal_cdf(x / sd);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((f - hi).abs());
    }
    d
}

/// Distances and correlations for one antenna count.
#[derive(Debug, Clone)]
pub struct CltPoint {
    pub n: usize,
    /// KS distance of each of the 2M marginals against N(0, c_k / 2).
    pub ks_distances: Vec<f64>,
    /// Largest absolute pairwise sample correlation between distinct
    /// components.
    pub max_abs_correlation: f64,
    /// Row energies `||h_k||^2 / N` used as the plug-in `c_k`.
    pub row_energies: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CltReport {
    pub points: Vec<CltPoint>,
}

/// For each N in `n_list`, draws a fresh channel, samples the received
/// vector under uniform phases and reports per-marginal KS distances against
/// the limiting Gaussian plus the largest off-diagonal correlation.
pub fn gaussian_limit_check(
    m: usize,
    n_list: &[usize],
    samples_per_n: usize,
    seed: u64,
) -> Result<CltReport> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) || n_list.iter().any(|&n| n < m) {
        return Err(CeError::Dimension(
            "n_list must be ascending with every N >= M".into(),
        ));
    }
    let mut points = Vec::with_capacity(n_list.len());
    for (ni, &n) in n_list.iter().enumerate() {
        let chan = generate_channel(m, n, seed.wrapping_add(ni as u64))?;
        let row_energies: Vec<f64> = (0..m)
            .map(|k| chan.row(k).iter().map(|h| h.norm_sqr()).sum::<f64>() / n as f64)
            .collect();
        let samples = sample_z(&chan, seed ^ (n as u64) << 20, samples_per_n);
        let dims = 2 * m;
        let mut ks_distances = Vec::with_capacity(dims);
        for d in 0..dims {
            let marginal: Vec<f64> = samples.iter().map(|s| s.components[d]).collect();
            let c_k = row_energies[d / 2];
            ks_distances.push(ks_distance_to_gaussian(&marginal, c_k / 2.0));
        }
        // Pairwise sample correlations.
        let count = samples.len() as f64;
        let means: Vec<f64> = (0..dims)
            .map(|d| samples.iter().map(|s| s.components[d]).sum::<f64>() / count)
            .collect();
        let sds: Vec<f64> = (0..dims)
            .map(|d| {
                (samples
                    .iter()
                    .map(|s| (s.components[d] - means[d]).powi(2))
                    .sum::<f64>()
                    / count)
                    .sqrt()
            })
            .collect();
        let mut max_abs_correlation = 0.0f64;
        for a in 0..dims {
            for b in a + 1..dims {
                let cov = samples
                    .iter()
                    .map(|s| (s.components[a] - means[a]) * (s.components[b] - means[b]))
                    .sum::<f64>()
                    / count;
                let rho = cov / (sds[a] * sds[b]);
                max_abs_correlation = max_abs_correlation.max(rho.abs());
            }
        }
        points.push(CltPoint {
            n,
            ks_distances,
            max_abs_correlation,
            row_energies,
        });
    }
    Ok(CltReport { points })
}

/// Monte Carlo estimate of `Prob(z in B_delta(u))` with its binomial
/// standard error.
pub fn box_probability(
    channel: &ChannelMatrix,
    spec: &BoxSpec,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(CeError::Dimension("samples must be >= 1".into()));
    }
    if spec.center.len() != channel.num_users() {
        return Err(CeError::Dimension(format!(
            "box center has {} users, channel has {}",
            spec.center.len(),
            channel.num_users()
        )));
    }
    let draws = sample_z(channel, seed, samples);
    let delta = spec.half_width;
    let hits = draws
        .iter()
        .filter(|z| {
            spec.center.iter().enumerate().all(|(k, c)| {
                (z.components[2 * k] - c.re).abs() <= delta
                    && (z.components[2 * k + 1] - c.im).abs() <= delta
            })
        })
        .count();
    let p = hits as f64 / samples as f64;
    let se = (p * (1.0 - p) / samples as f64).sqrt();
    Ok((p, se))
}

/// Box probability predicted by the limiting Gaussian: a product of
/// error-function differences across the 2M dimensions. `c` holds the
/// per-user variances `c_k`.
pub fn gaussian_box_probability(spec: &BoxSpec, c: &[f64]) -> f64 {
    let delta = spec.half_width;
    spec.center
        .iter()
        .zip(c)
        .map(|(u, &ck)| {
            let sd = (ck / 2.0).sqrt();
            let p_i = normal_cdf((u.re + delta) / sd) - normal_cdf((u.re - delta) / sd);
            let p_q = normal_cdf((u.im + delta) / sd) - normal_cdf((u.im - delta) / sd);
            p_i * p_q
        })
        .product()
}

/// Ergodic MUI as a function of N, the empirical face of the MUI-suppression
/// theorem.
pub fn mui_decay_curve(
    m: usize,
    alphabet: Alphabet,
    energies: &EnergyAllocation,
    n_list: &[usize],
    mc: &McParams,
) -> Result<Vec<(usize, MuiEstimate)>> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CeError::Dimension("n_list must be ascending".into()));
    }
    n_list
        .iter()
        .map(|&n| Ok((n, estimate_mui(m, n, alphabet, energies, mc)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelMatrix;

    #[test]
    fn scalar_samples_lie_on_unit_circle() {
        let chan =
            ChannelMatrix::from_entries(vec![Complex64::new(1.0, 0.0)], 1, 1).unwrap();
        for z in sample_z(&chan, 3, 500) {
            let r = (z.components[0].powi(2) + z.components[1].powi(2)).sqrt();
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn z_mean_is_zero() {
        let one = Complex64::new(1.0, 0.0);
        let n = 16;
        let chan = ChannelMatrix::from_entries(vec![one; n], 1, n).unwrap();
        let count = 40_000;
        let samples = sample_z(&chan, 9, count);
        let bound = 4.0 / (count as f64).sqrt();
        for d in 0..2 {
            let mean: f64 =
                samples.iter().map(|s| s.components[d]).sum::<f64>() / count as f64;
            assert!(mean.abs() < bound, "mean of component {d} = {mean}");
        }
    }

    #[test]
    fn z_second_moment_identity() {
        // E[(z_k^I)^2 + (z_k^Q)^2] = ||h_k||^2 / N.
        let chan = generate_channel(2, 32, 4).unwrap();
        let count = 50_000;
        let samples = sample_z(&chan, 11, count);
        for k in 0..2 {
            let expect: f64 =
                chan.row(k).iter().map(|h| h.norm_sqr()).sum::<f64>() / 32.0;
            let vals: Vec<f64> = samples
                .iter()
                .map(|s| s.components[2 * k].powi(2) + s.components[2 * k + 1].powi(2))
                .collect();
            let mean: f64 = vals.iter().sum::<f64>() / count as f64;
            let sd: f64 = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / count as f64)
                .sqrt();
            let tol = 3.0 * sd / (count as f64).sqrt();
            assert!(
                (mean - expect).abs() < tol,
                "user {k}: mean {mean}, expect {expect}"
            );
        }
    }

    #[test]
    fn single_phasor_marginal_is_not_gaussian() {
        // N = M = 1: the marginal is arcsine-type, far from Gaussian.
        let chan =
            ChannelMatrix::from_entries(vec![Complex64::new(1.0, 0.0)], 1, 1).unwrap();
        let samples = sample_z(&chan, 21, 5_000);
        let marginal: Vec<f64> = samples.iter().map(|s| s.components[0]).collect();
        let d = ks_distance_to_gaussian(&marginal, 0.5);
        assert!(d > 0.1, "KS distance {d} unexpectedly small");
    }

    #[test]
    fn ks_distance_of_gaussian_samples_is_small() {
        let mut rng = rng::stream(2, 0);
        let n = 20_000;
        let samples: Vec<f64> = (0..n).map(|_| rng::standard_normal(&mut rng)).collect();
        let d = ks_distance_to_gaussian(&samples, 1.0);
        assert!(d < 0.015, "KS distance {d} for true Gaussian samples");
    }

    #[test]
    fn box_probability_extremes() {
        let chan = generate_channel(1, 4, 2).unwrap();
        let center = vec![Complex64::new(0.0, 0.0)];
        let huge = BoxSpec::new(center.clone(), 1e3).unwrap();
        let (p, _) = box_probability(&chan, &huge, 2_000, 3).unwrap();
        assert_eq!(p, 1.0);
        let tiny = BoxSpec::new(center, 1e-9).unwrap();
        let (p, _) = box_probability(&chan, &tiny, 2_000, 3).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn box_probability_monotone_in_delta() {
        // Common random numbers: nested boxes on the same sample set.
        let chan = generate_channel(2, 16, 6).unwrap();
        let center = vec![Complex64::new(0.2, -0.1), Complex64::new(-0.3, 0.4)];
        let mut prev = 0.0;
        for &delta in &[0.1, 0.2, 0.4, 0.8, 1.6] {
            let spec = BoxSpec::new(center.clone(), delta).unwrap();
            let (p, _) = box_probability(&chan, &spec, 20_000, 8).unwrap();
            assert!(p >= prev, "box probability decreased at delta {delta}");
            assert!((0.0..=1.0).contains(&p));
            prev = p;
        }
    }

    #[test]
    fn clt_check_is_deterministic() {
        let a = gaussian_limit_check(2, &[4, 16], 2_000, 5).unwrap();
        let b = gaussian_limit_check(2, &[4, 16], 2_000, 5).unwrap();
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert_eq!(pa.ks_distances, pb.ks_distances);
            assert_eq!(pa.max_abs_correlation, pb.max_abs_correlation);
        }
    }
}

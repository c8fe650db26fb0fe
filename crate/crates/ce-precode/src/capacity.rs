//! Cooperative upper bound on the broadcast-channel sum capacity under an
//! average total power constraint: water-filling over the eigenmodes of
//! `H H^H`. This is the baseline every power-gap result is measured against.

use crate::channel::{generate_channel, ChannelMatrix, PowerConfig};
use crate::metrics::{SNR_BRACKET_DB, SNR_RESOLUTION_DB};
use crate::rng;
use crate::{CeError, Result};
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

/// Eigenvalues below `max * ZERO_MODE_REL` count as zero modes.
const ZERO_MODE_REL: f64 = 1e-12;

/// Water-filling allocation over the eigenmodes of `H H^H`.
#[derive(Debug, Clone)]
pub struct WaterfillSolution {
    /// Eigenvalues of `H H^H`, descending.
    pub eigenvalues: Vec<f64>,
    /// Per-eigenmode powers, `allocations[i] = max(0, mu - sigma^2 / lambda_i)`.
    pub allocations: Vec<f64>,
    pub water_level: f64,
    pub capacity_bits: f64,
}

/// Eigenvalues of `H H^H` (squared singular values of `H`), descending.
pub fn gram_eigenvalues(channel: &ChannelMatrix) -> Vec<f64> {
    let m = channel.num_users();
    let n = channel.num_antennas();
    let h = DMatrix::from_fn(m, n, |k, i| channel.entry(k, i));
    let svd = h.svd(false, false);
    let mut eig: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eig
}

/// Water-filling on pre-computed eigenvalues. Exact active-set sweep over the
/// sorted eigenvalues; no iteration tolerance.
pub fn waterfill(eigenvalues: &[f64], power: &PowerConfig) -> WaterfillSolution {
    let sigma2 = power.noise_variance;
    let p_total = power.total_power;
    let max_eig = eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let active_eigs: Vec<f64> = eigenvalues
        .iter()
        .cloned()
        .filter(|&l| l > ZERO_MODE_REL * max_eig && l > 0.0)
        .collect();
    if active_eigs.is_empty() {
        return WaterfillSolution {
            eigenvalues: eigenvalues.to_vec(),
            allocations: vec![0.0; eigenvalues.len()],
            water_level: 0.0,
            capacity_bits: 0.0,
        };
    }
    // With eigenvalues sorted descending, try r strongest modes active: the
    // water level mu = (P_T + sigma^2 sum 1/lambda_i) / r must clear the
    // weakest active mode. The largest such r is the solution.
    let mut inv_sum = 0.0;
    let mut chosen = (1, 0.0);
    for (idx, &l) in active_eigs.iter().enumerate() {
        inv_sum += sigma2 / l;
        let r = idx + 1;
        let mu = (p_total + inv_sum) / r as f64;
        if mu - sigma2 / l > 0.0 {
            chosen = (r, mu);
        } else {
            break;
        }
    }
    let (_, water_level) = chosen;
    let allocations: Vec<f64> = eigenvalues
        .iter()
        .map(|&l| {
            if l > ZERO_MODE_REL * max_eig && l > 0.0 {
                (water_level - sigma2 / l).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let capacity_bits = allocations
        .iter()
        .zip(eigenvalues)
        .map(|(&p, &l)| (1.0 + p * l / sigma2).log2())
        .sum();
    WaterfillSolution {
        eigenvalues: eigenvalues.to_vec(),
        allocations,
        water_level,
        capacity_bits,
    }
}

/// Capacity of the cooperative M x N point-to-point channel,
/// `max_{tr(Q) <= P_T} log2 det(I + H Q H^H / sigma^2)`.
pub fn cooperative_capacity(channel: &ChannelMatrix, power: &PowerConfig) -> WaterfillSolution {
    waterfill(&gram_eigenvalues(channel), power)
}

/// Eigenvalue draws of `H H^H` over an i.i.d. Rayleigh channel ensemble.
/// Sampled once and reused across power evaluations.
#[derive(Debug, Clone)]
pub struct EigenEnsemble {
    eigs: Vec<Vec<f64>>,
    num_users: usize,
}

impl EigenEnsemble {
    pub fn sample(m: usize, n: usize, num_channels: usize, seed: u64) -> Result<Self> {
        if num_channels == 0 {
            return Err(CeError::Dimension("num_channels must be >= 1".into()));
        }
        let eigs: Vec<Vec<f64>> = (0..num_channels as u64)
            .into_par_iter()
            .map(|ch| {
                let mut trial = rng::stream(seed, ch + 1);
                let chan = generate_channel(m, n, trial.gen())?;
                Ok(gram_eigenvalues(&chan))
            })
            .collect::<Result<_>>()?;
        Ok(EigenEnsemble { eigs, num_users: m })
    }

    /// Ergodic cooperative capacity per user (bits) at the given power.
    pub fn per_user_rate(&self, power: &PowerConfig) -> f64 {
        let total: f64 = self
            .eigs
            .iter()
            .map(|e| waterfill(e, power).capacity_bits)
            .sum();
        total / (self.eigs.len() * self.num_users) as f64
    }

    /// Standard error of the per-user rate across channel draws.
    pub fn per_user_rate_std_error(&self, power: &PowerConfig) -> f64 {
        let nc = self.eigs.len();
        if nc < 2 {
            return 0.0;
        }
        let per_channel: Vec<f64> = self
            .eigs
            .iter()
            .map(|e| waterfill(e, power).capacity_bits / self.num_users as f64)
            .collect();
        let mean = per_channel.iter().sum::<f64>() / nc as f64;
        let var = per_channel.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
            / (nc - 1) as f64;
        (var / nc as f64).sqrt()
    }

    /// Minimum `P_T/sigma^2` (dB) at which the ergodic cooperative capacity
    /// per user reaches `target_rate`.
    pub fn min_power_for_rate(&self, target_rate: f64) -> Result<f64> {
        if !(target_rate > 0.0) {
            return Err(CeError::Dimension("target rate must be > 0".into()));
        }
        let rate = |db: f64| self.per_user_rate(&PowerConfig::from_snr_db(db));
        let (mut lo, mut hi) = SNR_BRACKET_DB;
        if rate(lo) >= target_rate || rate(hi) < target_rate {
            return Err(CeError::Bracket(format!(
                "bound target {target_rate} bpcu not bracketed in [{lo}, {hi}] dB"
            )));
        }
        while hi - lo > SNR_RESOLUTION_DB {
            let mid = 0.5 * (lo + hi);
            if rate(mid) < target_rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Minimum `P_T/sigma^2` (dB) at which the ergodic cooperative capacity per
/// user reaches `target_rate`. The channel eigenvalues are sampled once and
/// reused across all power evaluations.
pub fn min_power_for_rate_bound(
    target_rate: f64,
    m: usize,
    n: usize,
    num_channels: usize,
    seed: u64,
) -> Result<f64> {
    EigenEnsemble::sample(m, n, num_channels, seed)?.min_power_for_rate(target_rate)
}

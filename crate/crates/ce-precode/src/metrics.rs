//! MUI energy, SINR, achievable rates and the power/energy searches built on
//! them.
//!
//! The expensive object is the per-channel MUI as a function of the common
//! symbol energy. It does not depend on `P_T` at all, so one [`MuiGrid`]
//! (32 log-spaced energies, monotone cubic interpolation per channel and
//! user) feeds every rate evaluation, the energy optimization, the `E*`
//! search and the minimum-power bisections.

use crate::alphabet::{sample_symbols_with, Alphabet, EnergyAllocation, SymbolVector};
use crate::channel::{generate_channel, ChannelMatrix, PowerConfig};
use crate::precoder::{ce_precode, golden_max, PhaseVector, PrecoderConfig};
use crate::rng;
use crate::{CeError, Result};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

/// Monte Carlo sizes and seeding for the nested channel/symbol loops.
#[derive(Debug, Clone)]
pub struct McParams {
    pub num_channels: usize,
    pub num_symbols: usize,
    pub seed: u64,
    pub precoder: PrecoderConfig,
}

impl McParams {
    pub fn new(num_channels: usize, num_symbols: usize, seed: u64, m: usize) -> Self {
        McParams {
            num_channels,
            num_symbols,
            seed,
            precoder: PrecoderConfig::default_for(m),
        }
    }
}

/// Per-user MUI energy estimate with its Monte Carlo standard error.
#[derive(Debug, Clone)]
pub struct MuiEstimate {
    pub per_user_mui: Vec<f64>,
    pub num_symbol_draws: usize,
    pub num_channel_draws: usize,
    /// Standard error of the ergodic mean, from the spread across channels.
    pub std_error: Vec<f64>,
}

/// Per-user SINR and achievable rates at one operating point.
#[derive(Debug, Clone)]
pub struct RateReport {
    pub per_user_sinr: Vec<f64>,
    /// `log2(gamma_k)` clamped at zero (zero rate is always achievable).
    pub per_user_rate: Vec<f64>,
    pub sum_rate: f64,
    pub energy_used: EnergyAllocation,
    pub snr_db: f64,
}

/// Parameters of the fixed-MUI energy search.
#[derive(Debug, Clone)]
pub struct EStarQuery {
    pub target_mui: f64,
    pub search_bracket: (f64, f64),
    pub tolerance: f64,
}

impl EStarQuery {
    pub fn new(target_mui: f64, bracket: (f64, f64), tolerance: f64) -> Result<Self> {
        if !(target_mui > 0.0) {
            return Err(CeError::Dimension("target MUI must be > 0".into()));
        }
        if !(bracket.0 > 0.0 && bracket.0 < bracket.1) {
            return Err(CeError::Dimension(format!(
                "need 0 < p_lo < p_hi, got {bracket:?}"
            )));
        }
        if !(tolerance > 0.0) {
            return Err(CeError::Dimension("tolerance must be > 0".into()));
        }
        Ok(EStarQuery {
            target_mui,
            search_bracket: bracket,
            tolerance,
        })
    }
}

/// One use of the physical channel: `y_k = sqrt(P_T/N) sum_i h_{k,i}
/// e^{j theta_i} + w_k` with `w_k ~ CN(0, sigma^2)`.
pub fn simulate_received(
    channel: &ChannelMatrix,
    phases: &PhaseVector,
    power: &PowerConfig,
    noise_seed: u64,
) -> Result<Vec<Complex64>> {
    if phases.len() != channel.num_antennas() {
        return Err(CeError::Dimension(format!(
            "phase vector has {} entries, channel has {} antennas",
            phases.len(),
            channel.num_antennas()
        )));
    }
    let amp = (power.total_power / channel.num_antennas() as f64).sqrt();
    let mut noise_rng = rng::stream(noise_seed, 0);
    Ok((0..channel.num_users())
        .map(|k| {
            let sum: Complex64 = channel
                .row(k)
                .iter()
                .zip(phases.phases())
                .map(|(h, &t)| h * Complex64::from_polar(1.0, t))
                .sum();
            amp * sum + rng::complex_gaussian(&mut noise_rng, power.noise_variance)
        })
        .collect())
}

/// SINR per user: `gamma_k = E_k / (mui_k + sigma^2 / P_T)`.
pub fn sinr(per_user_mui: &[f64], energies: &EnergyAllocation, power: &PowerConfig) -> Vec<f64> {
    per_user_mui
        .iter()
        .zip(energies.energies())
        .map(|(&mui, &e)| e / (mui + 1.0 / power.snr_linear()))
        .collect()
}

fn clamped_rate(gamma: f64) -> f64 {
    if gamma > 1.0 {
        gamma.log2()
    } else {
        0.0
    }
}

/// Per-channel mean `|s_k|^2` over `num_symbols` draws, for one channel
/// realization and a fixed energy allocation. The caller provides the trial
/// RNG so channel and symbol streams stay coupled.
fn channel_mui<R: Rng>(
    channel: &ChannelMatrix,
    alphabet: Alphabet,
    energies: &EnergyAllocation,
    config: &PrecoderConfig,
    num_symbols: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let m = channel.num_users();
    let mut acc = vec![0.0; m];
    for _ in 0..num_symbols {
        let target = sample_symbols_with(alphabet, energies, rng);
        let result = ce_precode(channel, &target, config)?;
        for (a, s) in acc.iter_mut().zip(&result.residuals) {
            *a += s.norm_sqr();
        }
    }
    for a in acc.iter_mut() {
        *a /= num_symbols as f64;
    }
    Ok(acc)
}

/// Nested Monte Carlo estimate of the ergodic per-user MUI energy: outer loop
/// over channel draws, inner loop over symbol vectors.
pub fn estimate_mui(
    m: usize,
    n: usize,
    alphabet: Alphabet,
    energies: &EnergyAllocation,
    mc: &McParams,
) -> Result<MuiEstimate> {
    if mc.num_channels == 0 || mc.num_symbols == 0 {
        return Err(CeError::Dimension("draw counts must be >= 1".into()));
    }
    if energies.len() != m {
        return Err(CeError::Dimension(format!(
            "energy allocation has {} entries, expected {m}",
            energies.len()
        )));
    }
    let per_channel: Vec<Vec<f64>> = (0..mc.num_channels as u64)
        .into_par_iter()
        .map(|ch| {
            let mut trial = rng::stream(mc.seed, ch + 1);
            let chan = generate_channel(m, n, trial.gen())?;
            channel_mui(&chan, alphabet, energies, &mc.precoder, mc.num_symbols, &mut trial)
        })
        .collect::<Result<_>>()?;

    let nc = mc.num_channels as f64;
    let mut mean = vec![0.0; m];
    for row in &per_channel {
        for (a, &v) in mean.iter_mut().zip(row) {
            *a += v;
        }
    }
    for a in mean.iter_mut() {
        *a /= nc;
    }
    let mut std_error = vec![0.0; m];
    if mc.num_channels > 1 {
        for row in &per_channel {
            for ((se, &v), &mu) in std_error.iter_mut().zip(row).zip(&mean) {
                *se += (v - mu) * (v - mu);
            }
        }
        for se in std_error.iter_mut() {
            *se = (*se / (nc - 1.0) / nc).sqrt();
        }
    }
    Ok(MuiEstimate {
        per_user_mui: mean,
        num_symbol_draws: mc.num_symbols,
        num_channel_draws: mc.num_channels,
        std_error,
    })
}

// ---------------------------------------------------------------------------
// MUI-vs-energy grid with monotone cubic interpolation
// ---------------------------------------------------------------------------

const MUI_FLOOR: f64 = 1e-280;

/// Fritsch-Carlson monotone cubic slopes.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    if n < 2 {
        return d;
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    d[0] = delta[0];
    d[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    // Endpoint slope limiting keeps the interpolant monotone on the first
    // and last intervals.
    if delta[0] == 0.0 {
        d[0] = 0.0;
    } else if d[0] * delta[0] < 0.0 {
        d[0] = 0.0;
    } else if d[0].abs() > 3.0 * delta[0].abs() {
        d[0] = 3.0 * delta[0];
    }
    if delta[n - 2] == 0.0 {
        d[n - 1] = 0.0;
    } else if d[n - 1] * delta[n - 2] < 0.0 {
        d[n - 1] = 0.0;
    } else if d[n - 1].abs() > 3.0 * delta[n - 2].abs() {
        d[n - 1] = 3.0 * delta[n - 2];
    }
    d
}

fn pchip_eval(x: &[f64], y: &[f64], d: &[f64], xq: f64) -> f64 {
    let n = x.len();
    if xq <= x[0] {
        return y[0];
    }
    if xq >= x[n - 1] {
        return y[n - 1];
    }
    let i = match x.binary_search_by(|v| v.partial_cmp(&xq).unwrap()) {
        Ok(i) => return y[i],
        Err(i) => i - 1,
    };
    let h = x[i + 1] - x[i];
    let t = (xq - x[i]) / h;
    let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
    let h10 = t * (1.0 - t) * (1.0 - t);
    let h01 = t * t * (3.0 - 2.0 * t);
    let h11 = t * t * (t - 1.0);
    h00 * y[i] + h10 * h * d[i] + h01 * y[i + 1] + h11 * h * d[i + 1]
}

/// Log-spaced common-energy grid used by the caching searches.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub e_min: f64,
    pub e_max: f64,
    pub points: usize,
}

impl GridSpec {
    /// Default 32-point grid covering the useful energy range, which scales
    /// with the antenna surplus `N / M`.
    pub fn default_for(m: usize, n: usize) -> Self {
        let ratio = n as f64 / m as f64;
        GridSpec {
            e_min: 0.01 * ratio,
            e_max: 200.0 * ratio,
            points: 32,
        }
    }

    pub fn energies(&self) -> Vec<f64> {
        let (lo, hi) = (self.e_min.ln(), self.e_max.ln());
        (0..self.points)
            .map(|i| (lo + (hi - lo) * i as f64 / (self.points - 1) as f64).exp())
            .collect()
    }
}

/// Per-channel MUI as a function of the common symbol energy, tabulated on a
/// log-spaced grid and interpolated monotone-cubically in log-log space.
/// Channel and symbol draws are shared across grid energies (common random
/// numbers), so interpolated curves are smooth in `E`.
#[derive(Debug, Clone)]
pub struct MuiGrid {
    pub m: usize,
    pub n: usize,
    pub energies: Vec<f64>,
    log_energies: Vec<f64>,
    /// `log_mui[ch][k][e_idx]`
    log_mui: Vec<Vec<Vec<f64>>>,
    /// PCHIP slopes matching `log_mui`.
    slopes: Vec<Vec<Vec<f64>>>,
}

impl MuiGrid {
    pub fn build(m: usize, n: usize, alphabet: Alphabet, grid: &GridSpec, mc: &McParams) -> Result<Self> {
        if mc.num_channels == 0 || mc.num_symbols == 0 {
            return Err(CeError::Dimension("draw counts must be >= 1".into()));
        }
        let energies = grid.energies();
        let unit = EnergyAllocation::equal(1.0, m)?;
        let per_channel: Vec<Vec<Vec<f64>>> = (0..mc.num_channels as u64)
            .into_par_iter()
            .map(|ch| {
                let mut trial = rng::stream(mc.seed, ch + 1);
                let chan = generate_channel(m, n, trial.gen())?;
                // Raw symbols drawn once per inner trial, reused at every
                // grid energy.
                let raws: Vec<SymbolVector> = (0..mc.num_symbols)
                    .map(|_| sample_symbols_with(alphabet, &unit, &mut trial))
                    .collect();
                let mut acc = vec![vec![0.0f64; energies.len()]; m];
                for raw in &raws {
                    for (ei, &e) in energies.iter().enumerate() {
                        let alloc = EnergyAllocation::equal(e, m)?;
                        let scaled: Vec<Complex64> =
                            raw.raw_symbols.iter().map(|u| u * e.sqrt()).collect();
                        let target = SymbolVector {
                            raw_symbols: raw.raw_symbols.clone(),
                            scaled_symbols: scaled,
                            alphabet_kind: alphabet,
                            energy_allocation: alloc,
                        };
                        let result = ce_precode(&chan, &target, &mc.precoder)?;
                        for (k, s) in result.residuals.iter().enumerate() {
                            acc[k][ei] += s.norm_sqr();
                        }
                    }
                }
                for row in acc.iter_mut() {
                    for v in row.iter_mut() {
                        *v /= mc.num_symbols as f64;
                    }
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;

        let log_energies: Vec<f64> = energies.iter().map(|e| e.ln()).collect();
        let log_mui: Vec<Vec<Vec<f64>>> = per_channel
            .iter()
            .map(|chan| {
                chan.iter()
                    .map(|row| row.iter().map(|&v| v.max(MUI_FLOOR).ln()).collect())
                    .collect()
            })
            .collect();
        let slopes = log_mui
            .iter()
            .map(|chan| {
                chan.iter()
                    .map(|row| pchip_slopes(&log_energies, row))
                    .collect()
            })
            .collect();
        Ok(MuiGrid {
            m,
            n,
            energies,
            log_energies,
            log_mui,
            slopes,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.log_mui.len()
    }

    /// Interpolated MUI for channel draw `ch`, user `k`, common energy `e`.
    pub fn mui(&self, ch: usize, k: usize, e: f64) -> f64 {
        pchip_eval(
            &self.log_energies,
            &self.log_mui[ch][k],
            &self.slopes[ch][k],
            e.ln(),
        )
        .exp()
    }

    /// Ergodic MUI (mean over channel draws and users) at common energy `e`.
    pub fn ergodic_mui(&self, e: f64) -> f64 {
        let mut acc = 0.0;
        for ch in 0..self.num_channels() {
            for k in 0..self.m {
                acc += self.mui(ch, k, e);
            }
        }
        acc / (self.num_channels() * self.m) as f64
    }

    /// Rate report at common energy `e` and the given power: per-channel SINR
    /// with interpolated MUI, clamped log rate, averaged over channels.
    pub fn rate_report(&self, e: f64, power: &PowerConfig) -> RateReport {
        let inv_snr = 1.0 / power.snr_linear();
        let nc = self.num_channels() as f64;
        let mut per_user_rate = vec![0.0; self.m];
        let mut per_user_sinr = vec![0.0; self.m];
        for ch in 0..self.num_channels() {
            for k in 0..self.m {
                let gamma = e / (self.mui(ch, k, e) + inv_snr);
                per_user_sinr[k] += gamma / nc;
                per_user_rate[k] += clamped_rate(gamma) / nc;
            }
        }
        let sum_rate = per_user_rate.iter().sum();
        RateReport {
            per_user_sinr,
            per_user_rate,
            sum_rate,
            energy_used: EnergyAllocation::equal(e, self.m).expect("positive energy"),
            snr_db: power.snr_db(),
        }
    }

    /// Standard error of the mean per-user rate at common energy `e`, from
    /// the spread across channel draws.
    pub fn per_user_rate_std_error(&self, e: f64, power: &PowerConfig) -> f64 {
        let inv_snr = 1.0 / power.snr_linear();
        let nc = self.num_channels();
        if nc < 2 {
            return 0.0;
        }
        let per_channel: Vec<f64> = (0..nc)
            .map(|ch| {
                (0..self.m)
                    .map(|k| clamped_rate(e / (self.mui(ch, k, e) + inv_snr)))
                    .sum::<f64>()
                    / self.m as f64
            })
            .collect();
        let mean = per_channel.iter().sum::<f64>() / nc as f64;
        let var = per_channel.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
            / (nc - 1) as f64;
        (var / nc as f64).sqrt()
    }

    /// Mean per-user rate at common energy `e`.
    fn per_user_rate(&self, e: f64, inv_snr: f64) -> f64 {
        let mut acc = 0.0;
        for ch in 0..self.num_channels() {
            for k in 0..self.m {
                acc += clamped_rate(e / (self.mui(ch, k, e) + inv_snr));
            }
        }
        acc / (self.num_channels() * self.m) as f64
    }

    /// Maximizes the mean per-user rate over the common energy: coarse log
    /// scan, then golden-section refinement around the best scan point.
    /// Returns `(best_energy, rate, interior)`.
    pub fn best_per_user_rate(&self, power: &PowerConfig) -> (f64, f64, bool) {
        let inv_snr = 1.0 / power.snr_linear();
        let lo = self.log_energies[0];
        let hi = *self.log_energies.last().unwrap();
        let scan = 129;
        let mut best_idx: usize = 0;
        let mut best_rate = f64::NEG_INFINITY;
        for i in 0..scan {
            let le = lo + (hi - lo) * i as f64 / (scan - 1) as f64;
            let r = self.per_user_rate(le.exp(), inv_snr);
            if r > best_rate {
                best_rate = r;
                best_idx = i;
            }
        }
        let step = (hi - lo) / (scan - 1) as f64;
        let a = lo + step * best_idx.saturating_sub(1) as f64;
        let b = (lo + step * (best_idx + 1) as f64).min(hi);
        let (le, rate) = golden_max(a, b, 60, |le| self.per_user_rate(le.exp(), inv_snr));
        let interior = best_idx > 0 && best_idx < scan - 1;
        (le.exp(), rate, interior)
    }
}

/// Ergodic achievable rates at one equal-energy operating point, computed
/// directly (no grid, no interpolation). This is the cross-check path for the
/// cached searches.
pub fn ergodic_rate(
    m: usize,
    n: usize,
    energies: &EnergyAllocation,
    power: &PowerConfig,
    alphabet: Alphabet,
    mc: &McParams,
) -> Result<RateReport> {
    let e0 = energies.energies()[0];
    if energies.energies().iter().any(|&e| e != e0) {
        return Err(CeError::Dimension(
            "ergodic_rate requires equal per-user energies".into(),
        ));
    }
    if energies.len() != m {
        return Err(CeError::Dimension(format!(
            "energy allocation has {} entries, expected {m}",
            energies.len()
        )));
    }
    let per_channel: Vec<Vec<f64>> = (0..mc.num_channels as u64)
        .into_par_iter()
        .map(|ch| {
            let mut trial = rng::stream(mc.seed, ch + 1);
            let chan = generate_channel(m, n, trial.gen())?;
            channel_mui(&chan, alphabet, energies, &mc.precoder, mc.num_symbols, &mut trial)
        })
        .collect::<Result<_>>()?;

    let inv_snr = 1.0 / power.snr_linear();
    let nc = mc.num_channels as f64;
    let mut per_user_rate = vec![0.0; m];
    let mut per_user_sinr = vec![0.0; m];
    for row in &per_channel {
        for k in 0..m {
            let gamma = e0 / (row[k] + inv_snr);
            per_user_sinr[k] += gamma / nc;
            per_user_rate[k] += clamped_rate(gamma) / nc;
        }
    }
    let sum_rate = per_user_rate.iter().sum();
    Ok(RateReport {
        per_user_sinr,
        per_user_rate,
        sum_rate,
        energy_used: energies.clone(),
        snr_db: power.snr_db(),
    })
}

/// Result of the 1-D sum-rate maximization over the common symbol energy.
#[derive(Debug, Clone)]
pub struct EnergyOptimum {
    pub best_energy: f64,
    pub report: RateReport,
    /// False when the maximum sits on the search-grid boundary.
    pub interior: bool,
}

/// Maximizes the ergodic sum-rate over the common energy `E > 0`.
pub fn optimize_energy(
    m: usize,
    n: usize,
    power: &PowerConfig,
    alphabet: Alphabet,
    mc: &McParams,
) -> Result<EnergyOptimum> {
    let grid = MuiGrid::build(m, n, alphabet, &GridSpec::default_for(m, n), mc)?;
    Ok(optimize_energy_from_grid(&grid, power))
}

/// Same maximization on a pre-built grid.
pub fn optimize_energy_from_grid(grid: &MuiGrid, power: &PowerConfig) -> EnergyOptimum {
    let (best_energy, _, interior) = grid.best_per_user_rate(power);
    let report = grid.rate_report(best_energy, power);
    EnergyOptimum {
        best_energy,
        report,
        interior,
    }
}

/// The highest common symbol energy whose ergodic MUI equals `target_mui`:
/// bisection of the interpolated ergodic MUI, with an explicit bracket check.
pub fn e_star_from_grid(grid: &MuiGrid, query: &EStarQuery) -> Result<f64> {
    let (p_lo, p_hi) = query.search_bracket;
    let f_lo = grid.ergodic_mui(p_lo);
    let f_hi = grid.ergodic_mui(p_hi);
    if !(f_lo < query.target_mui) || !(f_hi > query.target_mui) {
        return Err(CeError::Bracket(format!(
            "ergodic MUI not bracketed: mui({p_lo}) = {f_lo:.3e}, mui({p_hi}) = {f_hi:.3e}, target {:.3e}",
            query.target_mui
        )));
    }
    let (mut lo, mut hi) = (p_lo, p_hi);
    while hi - lo > query.tolerance {
        let mid = 0.5 * (lo + hi);
        if grid.ergodic_mui(mid) < query.target_mui {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Builds a grid and runs the `E*` search on it.
pub fn e_star(
    query: &EStarQuery,
    m: usize,
    n: usize,
    alphabet: Alphabet,
    mc: &McParams,
) -> Result<f64> {
    let grid = MuiGrid::build(m, n, alphabet, &GridSpec::default_for(m, n), mc)?;
    e_star_from_grid(&grid, query)
}

/// Search bracket for the minimum-power bisection, in dB.
pub const SNR_BRACKET_DB: (f64, f64) = (-30.0, 30.0);
/// Resolution of the minimum-power bisection, in dB.
pub const SNR_RESOLUTION_DB: f64 = 0.05;

/// Minimum `P_T/sigma^2` (dB) at which the energy-optimized per-user ergodic
/// rate reaches `target_rate`. One MUI grid serves every power evaluation.
pub fn min_power_for_rate_from_grid(grid: &MuiGrid, target_rate: f64) -> Result<f64> {
    if !(target_rate > 0.0) {
        return Err(CeError::Dimension("target rate must be > 0".into()));
    }
    let rate_at = |db: f64| {
        let power = PowerConfig::from_snr_db(db);
        grid.best_per_user_rate(&power).1
    };
    let (mut lo, mut hi) = SNR_BRACKET_DB;
    if rate_at(lo) >= target_rate || rate_at(hi) < target_rate {
        return Err(CeError::Bracket(format!(
            "target {target_rate} bpcu not bracketed in [{lo}, {hi}] dB"
        )));
    }
    while hi - lo > SNR_RESOLUTION_DB {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid) < target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Builds the MUI grid for `(m, n)` and bisects the required power.
pub fn min_power_for_rate(
    target_rate: f64,
    m: usize,
    n: usize,
    alphabet: Alphabet,
    mc: &McParams,
) -> Result<f64> {
    let grid = MuiGrid::build(m, n, alphabet, &GridSpec::default_for(m, n), mc)?;
    min_power_for_rate_from_grid(&grid, target_rate)
}

//! Constant-envelope transmit phase computation: the cyclic coordinate-descent
//! precoder that minimizes the summed MUI energy, and the ZF phase-only
//! baseline.

use crate::alphabet::{sample_symbols_with, Alphabet, EnergyAllocation, SymbolVector};
use crate::channel::{generate_channel, ChannelMatrix, PowerConfig};
use crate::rng;
use crate::{CeError, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;

/// Condition-number guard for the ZF pseudo-inverse.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Maps any angle into `[-pi, pi)`. Single canonicalization rule used
/// everywhere phases are written.
#[inline]
pub fn canonicalize(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut t = theta - two_pi * ((theta + PI) / two_pi).floor();
    if t >= PI {
        t -= two_pi;
    }
    if t < -PI {
        t += two_pi;
    }
    t
}

/// N transmit phase angles, each canonicalized into `[-pi, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    phases: Vec<f64>,
}

impl PhaseVector {
    pub fn new(phases: Vec<f64>) -> Self {
        PhaseVector {
            phases: phases.into_iter().map(canonicalize).collect(),
        }
    }

    pub fn zeros(n: usize) -> Self {
        PhaseVector {
            phases: vec![0.0; n],
        }
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn set(&mut self, i: usize, theta: f64) {
        self.phases[i] = canonicalize(theta);
    }
}

/// Initial phase choice for the iterative precoder.
#[derive(Debug, Clone)]
pub enum InitialPhases {
    AllZero,
    Provided(PhaseVector),
}

/// Knobs of the iterative precoder.
#[derive(Debug, Clone)]
pub struct PrecoderConfig {
    /// Maximum number of outer iterations (N sub-iterations each).
    pub max_outer_iterations: usize,
    /// Early stop once an outer iteration decreases the objective by less
    /// than this.
    pub objective_tolerance: f64,
    pub initial_phases: InitialPhases,
}

impl PrecoderConfig {
    pub fn new(max_outer_iterations: usize, objective_tolerance: f64) -> Result<Self> {
        if max_outer_iterations == 0 {
            return Err(CeError::Dimension("max_outer_iterations must be >= 1".into()));
        }
        if !(objective_tolerance >= 0.0) {
            return Err(CeError::Dimension("objective_tolerance must be >= 0".into()));
        }
        Ok(PrecoderConfig {
            max_outer_iterations,
            objective_tolerance,
            initial_phases: InitialPhases::AllZero,
        })
    }

    /// Defaults for `m` users: 10 outer iterations, tolerance `1e-8 * m`.
    pub fn default_for(m: usize) -> Self {
        PrecoderConfig {
            max_outer_iterations: 10,
            objective_tolerance: 1e-8 * m as f64,
            initial_phases: InitialPhases::AllZero,
        }
    }
}

/// Output of one precoding solve.
#[derive(Debug, Clone)]
pub struct PrecodeResult {
    pub phases: PhaseVector,
    /// Per-user residuals `s_k = sum_i h_{k,i} e^{j theta_i} / sqrt(N) - sqrt(E_k) u_k`.
    pub residuals: Vec<Complex64>,
    /// `sum_k |s_k|^2` for the final phases.
    pub objective: f64,
    /// Objective value at initialization and after every sub-iteration.
    pub objective_trace: Vec<f64>,
    pub outer_iterations_used: usize,
}

fn check_dims(channel: &ChannelMatrix, phases: &PhaseVector, target: &SymbolVector) -> Result<()> {
    if phases.len() != channel.num_antennas() {
        return Err(CeError::Dimension(format!(
            "phase vector has {} entries, channel has {} antennas",
            phases.len(),
            channel.num_antennas()
        )));
    }
    if target.num_users() != channel.num_users() {
        return Err(CeError::Dimension(format!(
            "symbol vector has {} users, channel has {}",
            target.num_users(),
            channel.num_users()
        )));
    }
    Ok(())
}

/// Per-user residuals for arbitrary phases.
pub fn residuals(
    channel: &ChannelMatrix,
    phases: &PhaseVector,
    target: &SymbolVector,
) -> Result<Vec<Complex64>> {
    check_dims(channel, phases, target)?;
    let n = channel.num_antennas();
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let steering: Vec<Complex64> = phases
        .phases()
        .iter()
        .map(|&t| Complex64::from_polar(1.0, t))
        .collect();
    Ok((0..channel.num_users())
        .map(|k| {
            let sum: Complex64 = channel
                .row(k)
                .iter()
                .zip(&steering)
                .map(|(h, e)| h * e)
                .sum();
            sum * inv_sqrt_n - target.scaled_symbols[k]
        })
        .collect())
}

/// The summed MUI energy `g(Theta, u) = sum_k |s_k|^2`.
pub fn objective(
    channel: &ChannelMatrix,
    phases: &PhaseVector,
    target: &SymbolVector,
) -> Result<f64> {
    Ok(residuals(channel, phases, target)?
        .iter()
        .map(|s| s.norm_sqr())
        .sum())
}

/// The exact single-coordinate minimizer of the objective, holding every
/// other phase fixed. If the complex sum inside `arg` is exactly zero, any
/// angle is a minimizer and the existing phase is returned unchanged.
pub fn ce_phase_update(
    channel: &ChannelMatrix,
    phases: &PhaseVector,
    target: &SymbolVector,
    coordinate: usize,
) -> Result<f64> {
    check_dims(channel, phases, target)?;
    let n = channel.num_antennas();
    if coordinate >= n {
        return Err(CeError::Dimension(format!(
            "coordinate {coordinate} out of range for {n} antennas"
        )));
    }
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let mut v = Complex64::new(0.0, 0.0);
    for k in 0..channel.num_users() {
        let row = channel.row(k);
        let partial: Complex64 = row
            .iter()
            .zip(phases.phases())
            .enumerate()
            .filter(|(i, _)| *i != coordinate)
            .map(|(_, (h, &t))| h * Complex64::from_polar(1.0, t))
            .sum();
        let inner = partial * inv_sqrt_n - target.scaled_symbols[k];
        v += row[coordinate].conj() * inv_sqrt_n * inner;
    }
    if v.re == 0.0 && v.im == 0.0 {
        return Ok(phases.phases()[coordinate]);
    }
    Ok(canonicalize(PI + v.arg()))
}

/// Cyclic coordinate descent on the phase angles: `max_outer_iterations`
/// passes of N sub-iterations (coordinate order 1..N), each applying the
/// exact single-coordinate minimizer. Stops early once a full pass decreases
/// the objective by less than `objective_tolerance`.
pub fn ce_precode(
    channel: &ChannelMatrix,
    target: &SymbolVector,
    config: &PrecoderConfig,
) -> Result<PrecodeResult> {
    let n = channel.num_antennas();
    let m = channel.num_users();
    let mut phases = match &config.initial_phases {
        InitialPhases::AllZero => PhaseVector::zeros(n),
        InitialPhases::Provided(p) => p.clone(),
    };
    check_dims(channel, &phases, target)?;

    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let mut steering: Vec<Complex64> = phases
        .phases()
        .iter()
        .map(|&t| Complex64::from_polar(1.0, t))
        .collect();
    // Running per-user sums S_k = sum_i h_{k,i} e^{j theta_i} / sqrt(N).
    let mut sums: Vec<Complex64> = (0..m)
        .map(|k| {
            channel
                .row(k)
                .iter()
                .zip(&steering)
                .map(|(h, e)| h * e)
                .sum::<Complex64>()
                * inv_sqrt_n
        })
        .collect();
    let g_of = |sums: &[Complex64]| -> f64 {
        sums.iter()
            .zip(&target.scaled_symbols)
            .map(|(s, t)| (s - t).norm_sqr())
            .sum()
    };
    let mut g = g_of(&sums);
    let mut trace = Vec::with_capacity(1 + config.max_outer_iterations * n);
    trace.push(g);

    let mut outer_used = 0;
    let mut excl = vec![Complex64::new(0.0, 0.0); m];
    for _ in 0..config.max_outer_iterations {
        let g_start = g;
        for q in 0..n {
            let mut v = Complex64::new(0.0, 0.0);
            for k in 0..m {
                let hq = channel.entry(k, q) * inv_sqrt_n;
                let e = sums[k] - hq * steering[q];
                excl[k] = e;
                v += (channel.entry(k, q).conj() * inv_sqrt_n) * (e - target.scaled_symbols[k]);
            }
            let theta_new = if v.re == 0.0 && v.im == 0.0 {
                phases.phases()[q]
            } else {
                canonicalize(PI + v.arg())
            };
            let dir_new = Complex64::from_polar(1.0, theta_new);
            let mut g_new = 0.0;
            for k in 0..m {
                let s = excl[k] + channel.entry(k, q) * inv_sqrt_n * dir_new;
                g_new += (s - target.scaled_symbols[k]).norm_sqr();
            }
            // Exact minimization guarantees descent; rounding could produce a
            // sub-epsilon increase, in which case the old phase is kept.
            if g_new <= g {
                phases.set(q, theta_new);
                steering[q] = dir_new;
                for k in 0..m {
                    sums[k] = excl[k] + channel.entry(k, q) * inv_sqrt_n * dir_new;
                }
                g = g_new;
            }
            trace.push(g);
        }
        outer_used += 1;
        if g_start - g < config.objective_tolerance {
            break;
        }
    }

    let final_residuals = residuals(channel, &phases, target)?;
    let objective = final_residuals.iter().map(|s| s.norm_sqr()).sum();
    Ok(PrecodeResult {
        phases,
        residuals: final_residuals,
        objective,
        objective_trace: trace,
        outer_iterations_used: outer_used,
    })
}

/// Unnormalized ZF solution `x = H^H (H H^H)^{-1} u` computed through a
/// rank-revealing SVD, with a condition-number guard.
fn zf_vector(channel: &ChannelMatrix, target: &[Complex64]) -> Result<Vec<Complex64>> {
    let m = channel.num_users();
    let n = channel.num_antennas();
    let h = DMatrix::from_fn(m, n, |k, i| channel.entry(k, i));
    let svd = h.svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin <= 0.0 || smax / smin > CONDITION_LIMIT {
        return Err(CeError::RankDeficient {
            cond: if smin > 0.0 { smax / smin } else { f64::INFINITY },
            limit: CONDITION_LIMIT,
        });
    }
    let u_mat = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let b = nalgebra::DVector::from_column_slice(target);
    // x = V * S^{-1} * U^H * b (minimum-norm solution; exact ZF since H has
    // full row rank).
    let mut y = u_mat.adjoint() * b;
    for (i, yi) in y.iter_mut().enumerate() {
        *yi /= Complex64::new(sv[i], 0.0);
    }
    let x = v_t.adjoint() * y;
    Ok(x.iter().cloned().collect())
}

/// ZF phase-only baseline: phases of the zero-forcing solution. The constant
/// amplitude `sqrt(P_T/N)` is applied downstream.
pub fn zf_phase_only_precode(
    channel: &ChannelMatrix,
    target: &SymbolVector,
) -> Result<PhaseVector> {
    if target.num_users() != channel.num_users() {
        return Err(CeError::Dimension(format!(
            "symbol vector has {} users, channel has {}",
            target.num_users(),
            channel.num_users()
        )));
    }
    let x = zf_vector(channel, &target.scaled_symbols)?;
    Ok(PhaseVector::new(x.iter().map(|xi| xi.arg()).collect()))
}

/// Pre-sampled (channel, symbol) trials for the ZF phase-only receiver-scale
/// search. `received[t][k]` is the noise-free received value
/// `sum_i h_{k,i} e^{j theta_i^{zf}} / sqrt(N)`; `symbols[t][k]` is the raw
/// unit-energy Gaussian symbol. The ZF phases are invariant to a common
/// symbol-energy scale, so one trial set serves every energy.
#[derive(Debug, Clone)]
pub struct ZfTrialSet {
    pub received: Vec<Vec<Complex64>>,
    pub symbols: Vec<Vec<Complex64>>,
    // Pooled second-order statistics over trials and users.
    mean_recv_sq: f64,
    mean_cross: f64,
    mean_sym_sq: f64,
}

impl ZfTrialSet {
    /// Samples `trials` i.i.d. Rayleigh channels with Gaussian symbols.
    /// Rank-deficient draws (measure zero) are skipped.
    pub fn sample_rayleigh(m: usize, n: usize, trials: usize, seed: u64) -> Result<Self> {
        let mut received = Vec::with_capacity(trials);
        let mut symbols = Vec::with_capacity(trials);
        let energies = EnergyAllocation::equal(1.0, m)?;
        for t in 0..trials as u64 {
            let mut rng = rng::stream(seed, t + 1);
            let chan = generate_channel(m, n, rng.gen())?;
            let sv = sample_symbols_with(Alphabet::Gaussian, &energies, &mut rng);
            let phases = match zf_phase_only_precode(&chan, &sv) {
                Ok(p) => p,
                Err(CeError::RankDeficient { .. }) => continue,
                Err(e) => return Err(e),
            };
            let inv_sqrt_n = 1.0 / (n as f64).sqrt();
            let z: Vec<Complex64> = (0..m)
                .map(|k| {
                    chan.row(k)
                        .iter()
                        .zip(phases.phases())
                        .map(|(h, &t)| h * Complex64::from_polar(1.0, t))
                        .sum::<Complex64>()
                        * inv_sqrt_n
                })
                .collect();
            received.push(z);
            symbols.push(sv.raw_symbols);
        }
        Self::from_trials(received, symbols)
    }

    pub fn from_trials(
        received: Vec<Vec<Complex64>>,
        symbols: Vec<Vec<Complex64>>,
    ) -> Result<Self> {
        if received.is_empty() || received.len() != symbols.len() {
            return Err(CeError::Dimension("empty or mismatched ZF trial set".into()));
        }
        let count = received.iter().map(|z| z.len()).sum::<usize>() as f64;
        let mean_recv_sq = received
            .iter()
            .flatten()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            / count;
        let mean_cross = received
            .iter()
            .flatten()
            .zip(symbols.iter().flatten())
            .map(|(z, u)| (z * u.conj()).re)
            .sum::<f64>()
            / count;
        let mean_sym_sq = symbols.iter().flatten().map(|u| u.norm_sqr()).sum::<f64>() / count;
        Ok(ZfTrialSet {
            received,
            symbols,
            mean_recv_sq,
            mean_cross,
            mean_sym_sq,
        })
    }

    /// Ergodic residual energy `E[|beta z_k - sqrt(E) u_k|^2]` for common
    /// symbol energy `energy` and receiver scale `beta`.
    pub fn residual_energy(&self, energy: f64, beta: f64) -> f64 {
        beta * beta * self.mean_recv_sq - 2.0 * beta * energy.sqrt() * self.mean_cross
            + energy * self.mean_sym_sq
    }

    /// Achievable per-user rate (bpcu, clamped at zero) at the given common
    /// energy, receiver scale and `P_T/sigma^2`.
    pub fn per_user_rate(&self, energy: f64, beta: f64, snr_linear: f64) -> f64 {
        let denom = self.residual_energy(energy, beta) + beta * beta / snr_linear;
        let gamma = energy / denom;
        if gamma > 1.0 {
            gamma.log2()
        } else {
            0.0
        }
    }

    /// Best per-user rate over the common energy for a fixed scale.
    pub fn best_rate_for_scale(&self, beta: f64, snr_linear: f64) -> f64 {
        golden_max(1e-6f64.ln(), 1e6f64.ln(), 80, |le| {
            self.per_user_rate(le.exp(), beta, snr_linear)
        })
        .1
    }

    /// Best per-user rate over both the scale and the common energy.
    pub fn best_rate(&self, snr_linear: f64) -> (f64, f64, f64) {
        let (lb, rate) = golden_max(1e-3f64.ln(), 1e3f64.ln(), 60, |lb| {
            self.best_rate_for_scale(lb.exp(), snr_linear)
        });
        let beta = lb.exp();
        let (le, _) = golden_max(1e-6f64.ln(), 1e6f64.ln(), 80, |le| {
            self.per_user_rate(le.exp(), beta, snr_linear)
        });
        (rate, le.exp(), beta)
    }
}

/// Golden-section maximization on `[a, b]`; returns (argmax, max).
pub(crate) fn golden_max(a: f64, b: f64, iterations: usize, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iterations {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    (mid, f(mid))
}

/// Receiver scale for the ZF phase-only precoder: the single constant that
/// maximizes the ergodic per-user rate over a fixed pre-sampled trial set.
/// Depends only on channel statistics, `P_T/sigma^2`, N and M.
pub fn zf_receiver_scale(
    m: usize,
    n: usize,
    power: &PowerConfig,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(CeError::Dimension("trials must be >= 1".into()));
    }
    let set = ZfTrialSet::sample_rayleigh(m, n, trials, seed)?;
    let (_, _, beta) = set.best_rate(power.snr_linear());
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{qam16_points, sample_symbols, Alphabet, EnergyAllocation};
    use crate::channel::ChannelMatrix;

    fn symbol_vector(raw: Vec<Complex64>, energies: Vec<f64>) -> SymbolVector {
        let alloc = EnergyAllocation::new(energies).unwrap();
        let scaled = raw
            .iter()
            .zip(alloc.energies())
            .map(|(u, &e)| u * e.sqrt())
            .collect();
        SymbolVector {
            raw_symbols: raw,
            scaled_symbols: scaled,
            alphabet_kind: Alphabet::Gaussian,
            energy_allocation: alloc,
        }
    }

    fn scalar_channel(h: Complex64) -> ChannelMatrix {
        ChannelMatrix::from_entries(vec![h], 1, 1).unwrap()
    }

    #[test]
    fn canonicalize_range() {
        for &t in &[0.0, PI, -PI, 3.5 * PI, -7.25 * PI, 123.456, f64::MIN_POSITIVE] {
            let c = canonicalize(t);
            assert!((-PI..PI).contains(&c), "canonicalize({t}) = {c}");
        }
        assert_eq!(canonicalize(PI), -PI);
        assert!((canonicalize(3.0 * PI) - (-PI)).abs() < 1e-12);
    }

    #[test]
    fn objective_scalar_cases() {
        let chan = scalar_channel(Complex64::new(1.0, 0.0));
        let target = symbol_vector(vec![Complex64::new(1.0, 0.0)], vec![1.0]);
        let g0 = objective(&chan, &PhaseVector::new(vec![0.0]), &target).unwrap();
        assert!(g0.abs() < 1e-30);
        let gpi = objective(&chan, &PhaseVector::new(vec![PI - 1e-15]), &target).unwrap();
        assert!((gpi - 4.0).abs() < 1e-12);
    }

    #[test]
    fn objective_matches_straight_line_oracle() {
        // Pinned M=2, N=3 channel, term-by-term re-implementation.
        let chan = generate_channel(2, 3, 7).unwrap();
        let target = symbol_vector(
            vec![Complex64::new(0.3, -0.4), Complex64::new(-1.1, 0.2)],
            vec![1.0, 2.0],
        );
        let phases = PhaseVector::zeros(3);
        let got = objective(&chan, &phases, &target).unwrap();

        let mut expect = 0.0;
        for k in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..3 {
                acc += chan.entry(k, i); // e^{j0} = 1
            }
            let s = acc / 3f64.sqrt() - target.scaled_symbols[k];
            expect += s.norm_sqr();
        }
        assert!((got - expect).abs() < 1e-12 * expect.max(1.0));
    }

    #[test]
    fn phase_update_scalar_alignment() {
        let chan = scalar_channel(Complex64::new(1.0, 0.0));
        let target = symbol_vector(vec![Complex64::new(1.0, 0.0)], vec![1.0]);
        let up = ce_phase_update(&chan, &PhaseVector::new(vec![2.0]), &target, 0).unwrap();
        assert!(up.abs() < 1e-12);
        let g = objective(&chan, &PhaseVector::new(vec![up]), &target).unwrap();
        assert!(g < 1e-24);

        let chan2 = scalar_channel(Complex64::from_polar(1.0, PI / 4.0));
        let up2 = ce_phase_update(&chan2, &PhaseVector::new(vec![1.0]), &target, 0).unwrap();
        assert!((up2 + PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn phase_update_beats_dense_grid() {
        // M=1, N=2, h=(1,1), E=2, u=1, phases=(pi/2, 0), coordinate 0:
        // the analytic update is 0; no angle on a dense grid does better.
        let chan = ChannelMatrix::from_entries(
            vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)],
            1,
            2,
        )
        .unwrap();
        let target = symbol_vector(vec![Complex64::new(1.0, 0.0)], vec![2.0]);
        let phases = PhaseVector::new(vec![PI / 2.0, 0.0]);
        let up = ce_phase_update(&chan, &phases, &target, 0).unwrap();
        assert!(up.abs() < 1e-12, "update = {up}");

        let mut best = PhaseVector::new(vec![up, 0.0]);
        let g_up = objective(&chan, &best, &target).unwrap();
        let grid = 1_000_000;
        for j in 0..grid {
            let t = -PI + 2.0 * PI * j as f64 / grid as f64;
            best.set(0, t);
            let g = objective(&chan, &best, &target).unwrap();
            assert!(g_up <= g + 1e-12, "grid angle {t} beats update: {g} < {g_up}");
        }
    }

    #[test]
    fn precode_exact_representable_case() {
        // M=1, N=2, h=(1,1), E=2, u=1: sqrt(2)*1 = (1+1)/sqrt(2), phases 0.
        let chan = ChannelMatrix::from_entries(
            vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)],
            1,
            2,
        )
        .unwrap();
        let target = symbol_vector(vec![Complex64::new(1.0, 0.0)], vec![2.0]);
        let result = ce_precode(&chan, &target, &PrecoderConfig::default_for(1)).unwrap();
        assert!(result.objective < 1e-20, "g = {}", result.objective);
        for &t in result.phases.phases() {
            assert!(canonicalize(t).abs() < 1e-10);
        }
    }

    #[test]
    fn precode_trace_is_monotone() {
        let chan = generate_channel(3, 12, 21).unwrap();
        let energies = EnergyAllocation::equal(1.0, 3).unwrap();
        let target = sample_symbols(Alphabet::Qam16, &energies, 4);
        let result = ce_precode(&chan, &target, &PrecoderConfig::default_for(3)).unwrap();
        for w in result.objective_trace.windows(2) {
            assert!(w[1] <= w[0], "trace increased: {} -> {}", w[0], w[1]);
        }
        let expected: f64 = result.residuals.iter().map(|s| s.norm_sqr()).sum();
        assert!((result.objective - expected).abs() <= 1e-10 * expected.max(1e-300));
    }

    #[test]
    fn precode_matches_exhaustive_grid_n3() {
        // N=3 exhaustive grid with 2pi/256 spacing; pinned channel seed 11,
        // 16-QAM corner symbol with E=1.
        let chan = generate_channel(1, 3, 11).unwrap();
        let corner = qam16_points()[15]; // (3+3j)/sqrt(10)
        let target = symbol_vector(vec![corner], vec![1.0]);

        let steps = 256usize;
        let mut g_grid = f64::INFINITY;
        let mut phases = PhaseVector::zeros(3);
        for a in 0..steps {
            for b in 0..steps {
                for c in 0..steps {
                    let ta = -PI + 2.0 * PI * a as f64 / steps as f64;
                    let tb = -PI + 2.0 * PI * b as f64 / steps as f64;
                    let tc = -PI + 2.0 * PI * c as f64 / steps as f64;
                    phases.set(0, ta);
                    phases.set(1, tb);
                    phases.set(2, tc);
                    let g = objective(&chan, &phases, &target).unwrap();
                    if g < g_grid {
                        g_grid = g;
                    }
                }
            }
        }
        let result = ce_precode(&chan, &target, &PrecoderConfig::default_for(1)).unwrap();
        assert!(
            result.objective <= g_grid + 1e-3,
            "coordinate descent {} vs grid {}",
            result.objective,
            g_grid
        );
    }

    #[test]
    fn precode_stationary_at_termination() {
        let chan = generate_channel(2, 16, 33).unwrap();
        let energies = EnergyAllocation::equal(1.0, 2).unwrap();
        let target = sample_symbols(Alphabet::Gaussian, &energies, 9);
        let config = PrecoderConfig::default_for(2);
        let result = ce_precode(&chan, &target, &config).unwrap();
        let mut again = config.clone();
        again.max_outer_iterations = 1;
        again.objective_tolerance = 0.0;
        again.initial_phases = InitialPhases::Provided(result.phases.clone());
        let more = ce_precode(&chan, &target, &again).unwrap();
        assert!(result.objective - more.objective < config.objective_tolerance);
    }

    #[test]
    fn scale_covariance() {
        // Rotating the channel by e^{j phi} shifts the trajectory by -phi
        // when the initialization is also shifted; objectives match.
        let phi = 0.7;
        let chan = generate_channel(2, 6, 55).unwrap();
        let rot = Complex64::from_polar(1.0, phi);
        let rotated = ChannelMatrix::from_entries(
            chan.entries().iter().map(|&h| h * rot).collect(),
            2,
            6,
        )
        .unwrap();
        let energies = EnergyAllocation::equal(1.0, 2).unwrap();
        let target = sample_symbols(Alphabet::Qam16, &energies, 13);

        let mut config = PrecoderConfig::default_for(2);
        let base = ce_precode(&chan, &target, &config).unwrap();
        config.initial_phases =
            InitialPhases::Provided(PhaseVector::new(vec![-phi; 6]));
        let shifted = ce_precode(&rotated, &target, &config).unwrap();

        assert!((base.objective - shifted.objective).abs() < 1e-9);
        for (&a, &b) in base.phases.phases().iter().zip(shifted.phases.phases()) {
            let diff = canonicalize(a - phi - b);
            assert!(diff.abs() < 1e-8, "phase mismatch {a} vs {b}");
        }
    }

    #[test]
    fn zf_identity_channel() {
        let m = 2;
        let mut entries = vec![Complex64::new(0.0, 0.0); 4];
        entries[0] = Complex64::new(1.0, 0.0);
        entries[3] = Complex64::new(1.0, 0.0);
        let chan = ChannelMatrix::from_entries(entries, m, 2).unwrap();
        let u = vec![
            Complex64::from_polar(1.0, PI / 3.0),
            Complex64::from_polar(1.0, -0.4),
        ];
        let target = symbol_vector(u.clone(), vec![1.0, 1.0]);
        let phases = zf_phase_only_precode(&chan, &target).unwrap();
        assert!((phases.phases()[0] - PI / 3.0).abs() < 1e-12);
        assert!((phases.phases()[1] + 0.4).abs() < 1e-12);
    }

    #[test]
    fn zf_row_channel_closed_form() {
        // M=1, N=2, h=(1, j), u=1: x = h^H / ||h||^2 = (1, -j)/2.
        let chan = ChannelMatrix::from_entries(
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)],
            1,
            2,
        )
        .unwrap();
        let target = symbol_vector(vec![Complex64::new(1.0, 0.0)], vec![1.0]);
        let phases = zf_phase_only_precode(&chan, &target).unwrap();
        assert!(phases.phases()[0].abs() < 1e-12);
        assert!((phases.phases()[1] + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn zf_pseudo_inverse_identity() {
        // Pinned M=2, N=4 channel (seed 13): H * (H^dagger u) = u to 1e-9.
        let chan = generate_channel(2, 4, 13).unwrap();
        let u = vec![Complex64::new(0.5, -0.3), Complex64::new(-1.2, 0.8)];
        let x = zf_vector(&chan, &u).unwrap();
        for k in 0..2 {
            let y: Complex64 = chan.row(k).iter().zip(&x).map(|(h, xi)| h * xi).sum();
            assert!((y - u[k]).norm() < 1e-9, "H x != u at row {k}");
        }
    }

    #[test]
    fn zf_rank_deficiency_detected() {
        let one = Complex64::new(1.0, 0.0);
        let chan = ChannelMatrix::from_entries(vec![one, one, one, one], 2, 2).unwrap();
        let target = symbol_vector(vec![one, one], vec![1.0, 1.0]);
        assert!(matches!(
            zf_phase_only_precode(&chan, &target),
            Err(CeError::RankDeficient { .. })
        ));
    }

    #[test]
    fn zf_receiver_scale_is_locally_optimal() {
        let power = PowerConfig::from_snr_db(5.0);
        let m = 2;
        let n = 8;
        let beta = zf_receiver_scale(m, n, &power, 200, 77).unwrap();
        // Held-out trial set.
        let held_out = ZfTrialSet::sample_rayleigh(m, n, 200, 1234).unwrap();
        let snr = power.snr_linear();
        let at = |b: f64| held_out.best_rate_for_scale(b, snr);
        let r = at(beta);
        assert!(r + 1e-9 >= at(beta / 2.0), "beta/2 beats the optimum");
        assert!(r + 1e-9 >= at(2.0 * beta), "2*beta beats the optimum");
    }
}

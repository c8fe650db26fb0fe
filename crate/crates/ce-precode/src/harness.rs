//! Experiment orchestration: declarative specs, dispatch to the library
//! operations, and CSV emission with a metadata sidecar.

use crate::alphabet::{qam16_points, Alphabet, EnergyAllocation};
use crate::capacity::EigenEnsemble;
use crate::channel::{generate_channel, PowerConfig};
use crate::metrics::{
    self, EStarQuery, GridSpec, McParams, MuiGrid, SNR_BRACKET_DB, SNR_RESOLUTION_DB,
};
use crate::precoder::ZfTrialSet;
use crate::stats::{self, BoxSpec};
use crate::{CeError, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// One experiment family, one CLI subcommand each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    MuiVsN,
    EStarVsN,
    MinPowerVsN,
    PowerGapVsRate,
    RateVsNScaledPower,
    CltCheck,
    BoxProb,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::MuiVsN,
        ExperimentKind::EStarVsN,
        ExperimentKind::MinPowerVsN,
        ExperimentKind::PowerGapVsRate,
        ExperimentKind::RateVsNScaledPower,
        ExperimentKind::CltCheck,
        ExperimentKind::BoxProb,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::MuiVsN => "mui-vs-n",
            ExperimentKind::EStarVsN => "e-star-vs-n",
            ExperimentKind::MinPowerVsN => "min-power-vs-n",
            ExperimentKind::PowerGapVsRate => "power-gap-vs-rate",
            ExperimentKind::RateVsNScaledPower => "rate-vs-n-scaled-power",
            ExperimentKind::CltCheck => "clt-check",
            ExperimentKind::BoxProb => "box-prob",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| CeError::Parse(format!("unknown experiment kind `{s}`")))
    }
}

/// Declarative experiment description: kind, flat key=value parameters, seed
/// and output location.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub parameters: BTreeMap<String, String>,
    pub master_seed: u64,
    pub output_path: PathBuf,
}

impl ExperimentSpec {
    pub fn new(
        kind: ExperimentKind,
        parameters: BTreeMap<String, String>,
        master_seed: u64,
        output_path: PathBuf,
    ) -> Self {
        ExperimentSpec {
            kind,
            parameters,
            master_seed,
            output_path,
        }
    }

    /// Hex SHA-256 digest of the canonical spec text.
    pub fn hash(&self) -> String {
        let mut canon = format!("kind={}\nmaster_seed={}\n", self.kind.name(), self.master_seed);
        for (k, v) in &self.parameters {
            let _ = writeln!(canon, "{k}={v}");
        }
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks that every required parameter is present and parses, before any
    /// computation starts.
    pub fn validate(&self) -> Result<()> {
        let p = Params::new(self);
        match self.kind {
            ExperimentKind::MuiVsN => {
                p.usize("m")?;
                p.list_usize("n_list")?;
                p.alphabet("alphabet")?;
                p.positive_f64("energy")?;
                p.mc_counts()?;
            }
            ExperimentKind::EStarVsN => {
                p.usize("m")?;
                p.list_usize("n_list")?;
                p.alphabet("alphabet")?;
                p.positive_f64("target_mui")?;
                p.mc_counts()?;
            }
            ExperimentKind::MinPowerVsN => {
                p.usize("m")?;
                p.list_usize("n_list")?;
                p.positive_f64("target_rate")?;
                p.mc_counts()?;
                p.usize_or("bound_channels", 200)?;
            }
            ExperimentKind::PowerGapVsRate => {
                p.usize("m")?;
                p.usize("n")?;
                p.list_f64("rate_list")?;
                p.mc_counts()?;
                p.usize_or("bound_channels", 200)?;
                p.usize_or("zf_trials", 200)?;
            }
            ExperimentKind::RateVsNScaledPower => {
                p.usize("m")?;
                p.list_usize("n_list")?;
                p.positive_f64("p0")?;
                p.mc_counts()?;
            }
            ExperimentKind::CltCheck => {
                p.usize("m")?;
                p.list_usize("n_list")?;
                p.usize("samples")?;
            }
            ExperimentKind::BoxProb => {
                p.usize("m")?;
                p.usize("n")?;
                p.list_f64("delta_list")?;
                p.usize("samples")?;
                p.positive_f64_or("energy", 1.0)?;
            }
        }
        Ok(())
    }
}

/// Typed access to the flat parameter map.
struct Params<'a> {
    spec: &'a ExperimentSpec,
}

impl<'a> Params<'a> {
    fn new(spec: &'a ExperimentSpec) -> Self {
        Params { spec }
    }

    fn raw(&self, key: &str) -> Result<&str> {
        self.spec
            .parameters
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| {
                CeError::InvalidSpec(format!(
                    "missing parameter `{key}` for kind {}",
                    self.spec.kind.name()
                ))
            })
    }

    fn usize(&self, key: &str) -> Result<usize> {
        let raw = self.raw(key)?;
        let v: usize = raw
            .parse()
            .map_err(|_| CeError::InvalidSpec(format!("parameter `{key}`: bad integer `{raw}`")))?;
        if v == 0 {
            return Err(CeError::InvalidSpec(format!("parameter `{key}` must be >= 1")));
        }
        Ok(v)
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        if self.spec.parameters.contains_key(key) {
            self.usize(key)
        } else {
            Ok(default)
        }
    }

    fn positive_f64(&self, key: &str) -> Result<f64> {
        let raw = self.raw(key)?;
        let v: f64 = raw
            .parse()
            .map_err(|_| CeError::InvalidSpec(format!("parameter `{key}`: bad number `{raw}`")))?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(CeError::InvalidSpec(format!(
                "parameter `{key}` must be a positive finite number, got `{raw}`"
            )));
        }
        Ok(v)
    }

    fn positive_f64_or(&self, key: &str, default: f64) -> Result<f64> {
        if self.spec.parameters.contains_key(key) {
            self.positive_f64(key)
        } else {
            Ok(default)
        }
    }

    fn list_usize(&self, key: &str) -> Result<Vec<usize>> {
        let raw = self.raw(key)?;
        let list: Vec<usize> = raw
            .split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    CeError::InvalidSpec(format!("parameter `{key}`: bad integer `{s}`"))
                })
            })
            .collect::<Result<_>>()?;
        if list.is_empty() {
            return Err(CeError::InvalidSpec(format!("parameter `{key}` is empty")));
        }
        Ok(list)
    }

    fn list_f64(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.raw(key)?;
        let list: Vec<f64> = raw
            .split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    CeError::InvalidSpec(format!("parameter `{key}`: bad number `{s}`"))
                })
            })
            .collect::<Result<_>>()?;
        if list.is_empty() || list.iter().any(|v| !v.is_finite()) {
            return Err(CeError::InvalidSpec(format!(
                "parameter `{key}` must be a non-empty list of finite numbers"
            )));
        }
        Ok(list)
    }

    fn alphabet(&self, key: &str) -> Result<Alphabet> {
        Alphabet::parse(self.raw(key)?)
            .map_err(|e| CeError::InvalidSpec(format!("parameter `{key}`: {e}")))
    }

    fn alphabet_or(&self, key: &str, default: Alphabet) -> Result<Alphabet> {
        if self.spec.parameters.contains_key(key) {
            self.alphabet(key)
        } else {
            Ok(default)
        }
    }

    /// The shared Monte Carlo loop sizes.
    fn mc_counts(&self) -> Result<(usize, usize)> {
        Ok((self.usize("num_channels")?, self.usize("num_symbols")?))
    }
}

/// Fills in default Monte Carlo sizes for parameters the user left out. The
/// `full` flag selects the heavier counts.
pub fn apply_scale_defaults(
    kind: ExperimentKind,
    parameters: &mut BTreeMap<String, String>,
    full: bool,
) {
    let mut put = |key: &str, desk: &str, full_value: &str| {
        parameters
            .entry(key.to_string())
            .or_insert_with(|| (if full { full_value } else { desk }).to_string());
    };
    match kind {
        ExperimentKind::CltCheck => put("samples", "20000", "200000"),
        ExperimentKind::BoxProb => put("samples", "100000", "1000000"),
        _ => {
            put("num_channels", "100", "300");
            put("num_symbols", "100", "300");
        }
    }
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Empty,
}

/// Result of one experiment run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub spec_hash: String,
    pub columns: Vec<String>,
    /// One entry per sweep point, aligned with `columns`.
    pub rows: Vec<Vec<Cell>>,
    pub wall_time_seconds: f64,
}

fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// A row whose search failed: empty numeric cells, message in the trailing
/// error column.
fn error_row(width: usize, leading: Vec<Cell>, message: String) -> Vec<Cell> {
    let mut row = leading;
    while row.len() < width - 1 {
        row.push(Cell::Empty);
    }
    row.push(Cell::Text(message));
    row
}

/// Runs the experiment described by `spec`. Per-row bracket failures become
/// error markers in the output; they do not abort the sweep.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunRecord> {
    spec.validate()?;
    let start = Instant::now();
    let (cols, rows) = match spec.kind {
        ExperimentKind::MuiVsN => run_mui_vs_n(spec)?,
        ExperimentKind::EStarVsN => run_e_star_vs_n(spec)?,
        ExperimentKind::MinPowerVsN => run_min_power_vs_n(spec)?,
        ExperimentKind::PowerGapVsRate => run_power_gap_vs_rate(spec)?,
        ExperimentKind::RateVsNScaledPower => run_rate_vs_n_scaled_power(spec)?,
        ExperimentKind::CltCheck => run_clt_check(spec)?,
        ExperimentKind::BoxProb => run_box_prob(spec)?,
    };
    for row in &rows {
        debug_assert_eq!(row.len(), cols.len());
    }
    Ok(RunRecord {
        spec_hash: spec.hash(),
        columns: cols,
        rows,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Independent sub-seed for sweep row `idx`.
fn row_seed(master: u64, idx: usize) -> u64 {
    master.wrapping_add((idx as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn run_mui_vs_n(spec: &ExperimentSpec) -> Result<(Vec<String>, Vec<Vec<Cell>>)> {
    let p = Params::new(spec);
    let m = p.usize("m")?;
    let n_list = p.list_usize("n_list")?;
    let alphabet = p.alphabet("alphabet")?;
    let energy = p.positive_f64("energy")?;
    let (nc, ns) = p.mc_counts()?;
    let energies = EnergyAllocation::equal(energy, m)?;
    let mut rows = Vec::new();
    for (idx, &n) in n_list.iter().enumerate() {
        let mc = McParams::new(nc, ns, row_seed(spec.master_seed, idx), m);
        let est = metrics::estimate_mui(m, n, alphabet, &energies, &mc)?;
        let mean = est.per_user_mui.iter().sum::<f64>() / m as f64;
        let se = est.std_error.iter().map(|s| s * s).sum::<f64>().sqrt() / m as f64;
        eprintln!("mui-vs-n: n={n} mui={mean:.6e} +/- {se:.1e}");
        rows.push(vec![Cell::Num(n as f64), Cell::Num(mean), Cell::Num(se)]);
    }
    Ok((columns(&["n", "mui", "mui_std_error"]), rows))
}

fn run_e_star_vs_n(spec: &ExperimentSpec) -> Result<(Vec<String>, Vec<Vec<Cell>>)> {
    let p = Params::new(spec);
    let m = p.usize("m")?;
    let n_list = p.list_usize("n_list")?;
    let alphabet = p.alphabet("alphabet")?;
    let target = p.positive_f64("target_mui")?;
    let (nc, ns) = p.mc_counts()?;
    let cols = columns(&["n", "e_star", "e_star_halfwidth", "error"]);
    let mut rows = Vec::new();
    for (idx, &n) in n_list.iter().enumerate() {
        let mc = McParams::new(nc, ns, row_seed(spec.master_seed, idx), m);
        let grid_spec = GridSpec::default_for(m, n);
        let grid = MuiGrid::build(m, n, alphabet, &grid_spec, &mc)?;
        let tol = 1e-4 * grid_spec.e_max;
        let query = EStarQuery::new(target, (grid_spec.e_min, grid_spec.e_max), tol)?;
        match metrics::e_star_from_grid(&grid, &query) {
            Ok(e_star) => {
                eprintln!("e-star-vs-n: n={n} e_star={e_star:.6e}");
                rows.push(vec![
                    Cell::Num(n as f64),
                    Cell::Num(e_star),
                    Cell::Num(0.5 * tol),
                    Cell::Empty,
                ]);
            }
            Err(CeError::Bracket(msg)) => {
                eprintln!("e-star-vs-n: n={n} bracket failure: {msg}");
                rows.push(error_row(cols.len(), vec![Cell::Num(n as f64)], msg));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((cols, rows))
}

/// Local slope of a per-user rate curve in dB, for turning a rate standard
/// error into a dB standard error.
fn db_std_error(rate_std_error: f64, rate_at_db: impl Fn(f64) -> f64, db: f64) -> f64 {
    let slope = rate_at_db(db + 0.5) - rate_at_db(db - 0.5);
    if slope > 0.0 {
        rate_std_error / slope
    } else {
        f64::NAN
    }
}

fn run_min_power_vs_n(spec: &ExperimentSpec) -> Result<(Vec<String>, Vec<Vec<Cell>>)> {
    let p = Params::new(spec);
    let m = p.usize("m")?;
    let n_list = p.list_usize("n_list")?;
    let target = p.positive_f64("target_rate")?;
    let alphabet = p.alphabet_or("alphabet", Alphabet::Gaussian)?;
    let (nc, ns) = p.mc_counts()?;
    let bound_channels = p.usize_or("bound_channels", 200)?;
    let cols = columns(&[
        "n",
        "ce_db",
        "ce_db_std_error",
        "bound_db",
        "bound_db_std_error",
        "gap_db",
        "error",
    ]);
    let mut rows = Vec::new();
    for (idx, &n) in n_list.iter().enumerate() {
        let seed = row_seed(spec.master_seed, idx);
        let mc = McParams::new(nc, ns, seed, m);
        let grid = MuiGrid::build(m, n, alphabet, &GridSpec::default_for(m, n), &mc)?;
        let ensemble = EigenEnsemble::sample(m, n, bound_channels, seed ^ 0x5eed)?;
        let ce = metrics::min_power_for_rate_from_grid(&grid, target);
        let bound = ensemble.min_power_for_rate(target);
        match (ce, bound) {
            (Ok(ce_db), Ok(bound_db)) => {
                let ce_power = PowerConfig::from_snr_db(ce_db);
                let (best_e, _, _) = grid.best_per_user_rate(&ce_power);
                let ce_se = db_std_error(
                    grid.per_user_rate_std_error(best_e, &ce_power),
                    |db| grid.best_per_user_rate(&PowerConfig::from_snr_db(db)).1,
                    ce_db,
                );
                let bound_power = PowerConfig::from_snr_db(bound_db);
                let bound_se = db_std_error(
                    ensemble.per_user_rate_std_error(&bound_power),
                    |db| ensemble.per_user_rate(&PowerConfig::from_snr_db(db)),
                    bound_db,
                );
                eprintln!(
                    "min-power-vs-n: n={n} ce={ce_db:.2} dB (+/- {ce_se:.2}) \
                     bound={bound_db:.2} dB (+/- {bound_se:.2}) gap={:.2} dB",
                    ce_db - bound_db
                );
                rows.push(vec![
                    Cell::Num(n as f64),
                    Cell::Num(ce_db),
                    Cell::Num(ce_se),
                    Cell::Num(bound_db),
                    Cell::Num(bound_se),
                    Cell::Num(ce_db - bound_db),
                    Cell::Empty,
                ]);
            }
            (Err(CeError::Bracket(msg)), _) | (_, Err(CeError::Bracket(msg))) => {
                eprintln!("min-power-vs-n: n={n} bracket failure: {msg}");
                rows.push(error_row(cols.len(), vec![Cell::Num(n as f64)], msg));
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Ok((cols, rows))
}

/// Minimum `P_T/sigma^2` (dB) at which the ZF phase-only baseline reaches
/// `target_rate` per user.
fn zf_min_power(set: &ZfTrialSet, target_rate: f64) -> Result<f64> {
    let rate = |db: f64| set.best_rate(10f64.powf(db / 10.0)).0;
    let (mut lo, mut hi) = SNR_BRACKET_DB;
    if rate(lo) >= target_rate || rate(hi) < target_rate {
        return Err(CeError::Bracket(format!(
            "ZF target {target_rate} bpcu not bracketed in [{lo}, {hi}] dB"
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

fn run_power_gap_vs_rate(spec: &ExperimentSpec) -> Result<(Vec<String>, Vec<Vec<Cell>>)> {
    let p = Params::new(spec);
    let m = p.usize("m")?;
    let n = p.usize("n")?;
    let rate_list = p.list_f64("rate_list")?;
    let alphabet = p.alphabet_or("alphabet", Alphabet::Gaussian)?;
    let (nc, ns) = p.mc_counts()?;
    let bound_channels = p.usize_or("bound_channels", 200)?;
    let zf_trials = p.usize_or("zf_trials", 200)?;
    let seed = spec.master_seed;
    let mc = McParams::new(nc, ns, row_seed(seed, 0), m);
    let grid = MuiGrid::build(m, n, alphabet, &GridSpec::default_for(m, n), &mc)?;
    let ensemble = EigenEnsemble::sample(m, n, bound_channels, seed ^ 0x5eed)?;
    let zf = ZfTrialSet::sample_rayleigh(m, n, zf_trials, seed ^ 0x2f2f)?;
    let cols = columns(&[
        "rate",
        "ce_db",
        "bound_db",
        "zf_db",
        "ce_gap_db",
        "zf_gap_db",
        "error",
    ]);
    let mut rows = Vec::new();
    for &rate in &rate_list {
        if !(rate > 0.0) {
            rows.push(error_row(
                cols.len(),
                vec![Cell::Num(rate)],
                "target rate must be > 0".into(),
            ));
            continue;
        }
        let ce = metrics::min_power_for_rate_from_grid(&grid, rate);
        let bound = ensemble.min_power_for_rate(rate);
        let zf_db = zf_min_power(&zf, rate);
        match (ce, bound, zf_db) {
            (Ok(ce_db), Ok(bound_db), Ok(zf_db)) => {
                eprintln!(
                    "power-gap-vs-rate: rate={rate} ce={ce_db:.2} bound={bound_db:.2} \
                     zf={zf_db:.2} dB"
                );
                rows.push(vec![
                    Cell::Num(rate),
                    Cell::Num(ce_db),
                    Cell::Num(bound_db),
                    Cell::Num(zf_db),
                    Cell::Num(ce_db - bound_db),
                    Cell::Num(zf_db - bound_db),
                    Cell::Empty,
                ]);
            }
            (Err(CeError::Bracket(msg)), _, _)
            | (_, Err(CeError::Bracket(msg)), _)
            | (_, _, Err(CeError::Bracket(msg))) => {
                eprintln!("power-gap-vs-rate: rate={rate} bracket failure: {msg}");
                rows.push(error_row(cols.len(), vec![Cell::Num(rate)], msg));
            }
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return Err(e),
        }
    }
    Ok((cols, rows))
}

fn run_rate_vs_n_scaled_power(spec: &ExperimentSpec) -> Result<(Vec<String>, Vec<Vec<Cell>>)> {
    let p = Params::new(spec);
    let m = p.usize("m")?;
    let n_list = p.list_usize("n_list")?;
    let p0 = p.positive_f64("p0")?;
    let alphabet = p.alphabet_or("alphabet", Alphabet::Gaussian)?;
    let (nc, ns) = p.mc_counts()?;
    let mut rows = Vec::new();
    for (idx, &n) in n_list.iter().enumerate() {
        let mc = McParams::new(nc, ns, row_seed(spec.master_seed, idx), m);
        let grid = MuiGrid::build(m, n, alphabet, &GridSpec::default_for(m, n), &mc)?;
        let power = PowerConfig::new(p0 / n as f64, 1.0)?;
        let (best_e, rate, interior) = grid.best_per_user_rate(&power);
        let se = grid.per_user_rate_std_error(best_e, &power);
        eprintln!(
            "rate-vs-n-scaled-power: n={n} snr={:.2} dB rate={rate:.4} +/- {se:.1e} bpcu",
            power.snr_db()
        );
        rows.push(vec![
            Cell::Num(n as f64),
            Cell::Num(power.snr_db()),
            Cell::Num(rate),
            Cell::Num(se),
            Cell::Num(best_e),
            Cell::Num(if interior { 1.0 } else { 0.0 }),
        ]);
    }
    Ok((
        columns(&[
            "n",
            "snr_db",
            "per_user_rate",
            "rate_std_error",
            "best_energy",
            "interior",
        ]),
        rows,
    ))
}

/// KS distances above this flag a marginal as non-Gaussian.
const KS_GAUSSIAN_THRESHOLD: f64 = 0.1;

fn run_clt_check(spec: &ExperimentSpec) -> Result<(Vec<String>, Vec<Vec<Cell>>)> {
    let p = Params::new(spec);
    let m = p.usize("m")?;
    let n_list = p.list_usize("n_list")?;
    let samples = p.usize("samples")?;
    let report = stats::gaussian_limit_check(m, &n_list, samples, spec.master_seed)?;
    let mut rows = Vec::new();
    for point in &report.points {
        let max_ks = point.ks_distances.iter().cloned().fold(0.0f64, f64::max);
        let mean_ks =
            point.ks_distances.iter().sum::<f64>() / point.ks_distances.len() as f64;
        let non_gaussian = max_ks > KS_GAUSSIAN_THRESHOLD;
        eprintln!(
            "clt-check: n={} max_ks={max_ks:.4} max_corr={:.4} non_gaussian={}",
            point.n, point.max_abs_correlation, non_gaussian as u8
        );
        rows.push(vec![
            Cell::Num(point.n as f64),
            Cell::Num(max_ks),
            Cell::Num(mean_ks),
            Cell::Num(point.max_abs_correlation),
            Cell::Num(non_gaussian as u8 as f64),
        ]);
    }
    Ok((
        columns(&["n", "max_ks", "mean_ks", "max_abs_correlation", "non_gaussian"]),
        rows,
    ))
}

fn run_box_prob(spec: &ExperimentSpec) -> Result<(Vec<String>, Vec<Vec<Cell>>)> {
    let p = Params::new(spec);
    let m = p.usize("m")?;
    let n = p.usize("n")?;
    let delta_list = p.list_f64("delta_list")?;
    let samples = p.usize("samples")?;
    let energy = p.positive_f64_or("energy", 1.0)?;
    if delta_list.iter().any(|&d| !(d > 0.0)) {
        return Err(CeError::InvalidSpec(
            "delta_list entries must be > 0".into(),
        ));
    }
    let chan = generate_channel(m, n, spec.master_seed)?;
    let row_energies: Vec<f64> = (0..m)
        .map(|k| chan.row(k).iter().map(|h| h.norm_sqr()).sum::<f64>() / n as f64)
        .collect();
    // A fixed inner constellation point per user keeps the target inside the
    // bulk of the limiting Gaussian.
    let points = qam16_points();
    let center: Vec<_> = (0..m)
        .map(|k| points[(7 * k) % 16] * energy.sqrt())
        .collect();
    let mut rows = Vec::new();
    for (idx, &delta) in delta_list.iter().enumerate() {
        let box_spec = BoxSpec::new(center.clone(), delta)?;
        let (estimate, se) = stats::box_probability(
            &chan,
            &box_spec,
            samples,
            row_seed(spec.master_seed, idx),
        )?;
        let oracle = stats::gaussian_box_probability(&box_spec, &row_energies);
        eprintln!(
            "box-prob: delta={delta} estimate={estimate:.5} +/- {se:.1e} gaussian={oracle:.5}"
        );
        rows.push(vec![
            Cell::Num(delta),
            Cell::Num(estimate),
            Cell::Num(se),
            Cell::Num(oracle),
        ]);
    }
    Ok((
        columns(&["delta", "estimate", "std_error", "gaussian_oracle"]),
        rows,
    ))
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

/// 15-significant-digit numeric formatting; integers stay integral for
/// readability.
fn format_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.14e}")
    }
}

fn escape_csv(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') || s.contains('\r') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders the record as CSV text: header row, one line per row, trailing
/// newline.
pub fn render_csv(record: &RunRecord) -> String {
    let mut out = String::new();
    out.push_str(
        &record
            .columns
            .iter()
            .map(|c| escape_csv(c))
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push('\n');
    for row in &record.rows {
        let line = row
            .iter()
            .map(|cell| match cell {
                Cell::Num(v) => format_num(*v),
                Cell::Text(s) => escape_csv(s),
                Cell::Empty => String::new(),
            })
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Writes the CSV and a metadata sidecar at `path` + ".meta".
pub fn emit_csv(record: &RunRecord, spec: &ExperimentSpec, path: &Path) -> Result<()> {
    std::fs::write(path, render_csv(record))
        .map_err(|e| CeError::io(path.display().to_string(), e))?;
    let mut meta = format!(
        "kind={}\nmaster_seed={}\nspec_hash={}\nversion={}\nwall_time_seconds={:.3}\n",
        spec.kind.name(),
        spec.master_seed,
        record.spec_hash,
        env!("CARGO_PKG_VERSION"),
        record.wall_time_seconds,
    );
    for (k, v) in &spec.parameters {
        let _ = writeln!(meta, "param.{k}={v}");
    }
    let meta_path = PathBuf::from(format!("{}.meta", path.display()));
    std::fs::write(&meta_path, meta)
        .map_err(|e| CeError::io(meta_path.display().to_string(), e))
}

/// Parses a flat key=value preset file. `#` starts a comment line.
pub fn parse_preset(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CeError::io(path.display().to_string(), e))?;
    parse_preset_text(&text)
}

pub fn parse_preset_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CeError::Parse(format!("preset line {}: expected key=value", lineno + 1))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Splits one CSV line into unescaped fields, honoring quoted fields.
fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut field = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    field.push('"');
                } else {
                    quoted = false;
                }
            }
            '"' if field.is_empty() => quoted = true,
            ',' if !quoted => fields.push(std::mem::take(&mut field)),
            c => field.push(c),
        }
    }
    fields.push(field);
    fields
}

/// Parses CSV text produced by `render_csv` back into columns and cells.
/// Cells that parse as numbers become `Num`.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<Cell>>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CeError::Parse("empty CSV".into()))?;
    let cols: Vec<String> = split_csv_line(header);
    let mut rows = Vec::new();
    for line in lines {
        let cells: Vec<Cell> = split_csv_line(line)
            .into_iter()
            .map(|field| {
                if field.is_empty() {
                    Cell::Empty
                } else if let Ok(v) = field.parse::<f64>() {
                    Cell::Num(v)
                } else {
                    Cell::Text(field)
                }
            })
            .collect();
        if cells.len() != cols.len() {
            return Err(CeError::Parse(format!(
                "CSV row has {} cells, expected {}",
                cells.len(),
                cols.len()
            )));
        }
        rows.push(cells);
    }
    Ok((cols, rows))
}

//! Channel matrices and the empirical checks of the mild channel conditions
//! under which MUI suppression is guaranteed.

use crate::rng;
use crate::{CeError, Result};
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::Path;

/// How a channel matrix was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTag {
    /// Entries i.i.d. circularly-symmetric complex Gaussian, unit variance.
    IidRayleigh,
    /// Entries supplied explicitly (file or literal), seed field unused.
    Fixed,
}

/// The M x N complex gain matrix `H`, row-major: row `k` holds the gains from
/// every base-station antenna to user `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    entries: Vec<Complex64>,
    num_users: usize,
    num_antennas: usize,
    pub model_tag: ModelTag,
    pub seed: u64,
}

impl ChannelMatrix {
    /// Wraps explicit entries (row-major, `m * n` of them).
    pub fn from_entries(entries: Vec<Complex64>, m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 || m > n {
            return Err(CeError::Dimension(format!(
                "need 1 <= num_users <= num_antennas, got M={m}, N={n}"
            )));
        }
        if entries.len() != m * n {
            return Err(CeError::Dimension(format!(
                "expected {} entries for a {m}x{n} matrix, got {}",
                m * n,
                entries.len()
            )));
        }
        if entries.iter().any(|h| !h.re.is_finite() || !h.im.is_finite()) {
            return Err(CeError::Dimension("non-finite channel entry".into()));
        }
        Ok(ChannelMatrix {
            entries,
            num_users: m,
            num_antennas: n,
            model_tag: ModelTag::Fixed,
            seed: 0,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    /// Gains from all antennas to user `k`.
    pub fn row(&self, k: usize) -> &[Complex64] {
        let n = self.num_antennas;
        &self.entries[k * n..(k + 1) * n]
    }

    pub fn entry(&self, k: usize, i: usize) -> Complex64 {
        self.entries[k * self.num_antennas + i]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }
}

/// Total transmit power and receiver noise variance (both linear scale).
#[derive(Debug, Clone, Copy)]
pub struct PowerConfig {
    pub total_power: f64,
    pub noise_variance: f64,
}

impl PowerConfig {
    pub fn new(total_power: f64, noise_variance: f64) -> Result<Self> {
        if !(total_power > 0.0) || !(noise_variance > 0.0) {
            return Err(CeError::Dimension(format!(
                "power and noise variance must be positive, got P_T={total_power}, sigma^2={noise_variance}"
            )));
        }
        Ok(PowerConfig {
            total_power,
            noise_variance,
        })
    }

    /// Builds a config with `sigma^2 = 1` from an SNR given in dB.
    pub fn from_snr_db(snr_db: f64) -> Self {
        PowerConfig {
            total_power: 10f64.powf(snr_db / 10.0),
            noise_variance: 1.0,
        }
    }

    /// `10 log10(P_T / sigma^2)`.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.total_power / self.noise_variance).log10()
    }

    /// Linear `P_T / sigma^2`.
    pub fn snr_linear(&self) -> f64 {
        self.total_power / self.noise_variance
    }
}

/// Finite-N statistics of the asymptotic channel conditions: row
/// cross-correlations, the joint fourth-moment statistic and per-row energies.
/// The caller judges smallness; no threshold is baked in.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    /// `|h_k^H h_l| / N` for every ordered pair, diagonal entries zero.
    pub cross_correlations: Vec<Vec<f64>>,
    /// max over (k1,l1,k2,l2) of `sum_i |h_{k1,i}||h_{l1,i}||h_{k2,i}||h_{l2,i}| / N^2`.
    pub fourth_moment_stat: f64,
    /// `||h_k||^2 / N` per user, the finite-N estimates of the limits `c_k`.
    pub row_energies: Vec<f64>,
}

/// Draws an i.i.d. Rayleigh channel: entries CN(0,1), generated row-major with
/// the real part consumed before the imaginary part.
pub fn generate_channel(num_users: usize, num_antennas: usize, seed: u64) -> Result<ChannelMatrix> {
    if num_users == 0 || num_antennas == 0 || num_users > num_antennas {
        return Err(CeError::Dimension(format!(
            "need 1 <= num_users <= num_antennas, got M={num_users}, N={num_antennas}"
        )));
    }
    let mut rng = rng::stream(seed, 0);
    let entries: Vec<Complex64> = (0..num_users * num_antennas)
        .map(|_| rng::complex_gaussian(&mut rng, 1.0))
        .collect();
    Ok(ChannelMatrix {
        entries,
        num_users,
        num_antennas,
        model_tag: ModelTag::IidRayleigh,
        seed,
    })
}

/// Evaluates the finite-N statistics behind the asymptotic channel conditions.
pub fn check_assumptions(channel: &ChannelMatrix) -> AssumptionReport {
    let m = channel.num_users();
    let n = channel.num_antennas();
    let nf = n as f64;

    let mut cross = vec![vec![0.0; m]; m];
    for k in 0..m {
        for l in 0..m {
            if k == l {
                continue;
            }
            let dot: Complex64 = channel
                .row(k)
                .iter()
                .zip(channel.row(l))
                .map(|(a, b)| a.conj() * b)
                .sum();
            cross[k][l] = dot.norm() / nf;
        }
    }

    let abs_rows: Vec<Vec<f64>> = (0..m)
        .map(|k| channel.row(k).iter().map(|h| h.norm()).collect())
        .collect();
    let mut fourth = 0.0f64;
    for k1 in 0..m {
        for l1 in 0..m {
            for k2 in 0..m {
                for l2 in 0..m {
                    let s: f64 = (0..n)
                        .map(|i| abs_rows[k1][i] * abs_rows[l1][i] * abs_rows[k2][i] * abs_rows[l2][i])
                        .sum();
                    fourth = fourth.max(s / (nf * nf));
                }
            }
        }
    }

    let row_energies = (0..m)
        .map(|k| channel.row(k).iter().map(|h| h.norm_sqr()).sum::<f64>() / nf)
        .collect();

    AssumptionReport {
        cross_correlations: cross,
        fourth_moment_stat: fourth,
        row_energies,
    }
}

fn format_complex(h: Complex64) -> String {
    if h.im < 0.0 || (h.im == 0.0 && h.im.is_sign_negative()) {
        format!("{:.16e}{:.16e}j", h.re, h.im)
    } else {
        format!("{:.16e}+{:.16e}j", h.re, h.im)
    }
}

/// Parses a `re+imj` token, e.g. `1.5e0-2.25e-1j`.
fn parse_complex(token: &str) -> Result<Complex64> {
    let body = token
        .strip_suffix(['j', 'J'])
        .ok_or_else(|| CeError::Parse(format!("complex entry `{token}` does not end in j")))?;
    // Split at the sign that separates the two parts; skip position 0 and
    // signs that belong to an exponent.
    let bytes = body.as_bytes();
    let mut split = None;
    for idx in (1..bytes.len()).rev() {
        let c = bytes[idx];
        if (c == b'+' || c == b'-') && !matches!(bytes[idx - 1], b'e' | b'E') {
            split = Some(idx);
            break;
        }
    }
    let idx = split
        .ok_or_else(|| CeError::Parse(format!("complex entry `{token}` has no imaginary part")))?;
    let re: f64 = body[..idx]
        .parse()
        .map_err(|_| CeError::Parse(format!("bad real part in `{token}`")))?;
    let im: f64 = body[idx..]
        .parse()
        .map_err(|_| CeError::Parse(format!("bad imaginary part in `{token}`")))?;
    Ok(Complex64::new(re, im))
}

/// Serializes a channel in the fixed-channel text format: first line `M N`,
/// then M lines of N whitespace-separated `re+imj` entries.
pub fn to_fixed_text(channel: &ChannelMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", channel.num_users(), channel.num_antennas());
    for k in 0..channel.num_users() {
        let line: Vec<String> = channel.row(k).iter().map(|&h| format_complex(h)).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

/// Parses the fixed-channel text format.
pub fn from_fixed_text(text: &str) -> Result<ChannelMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CeError::Parse("empty channel file".into()))?;
    let mut dims = header.split_whitespace();
    let m: usize = dims
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| CeError::Parse("bad M in channel file header".into()))?;
    let n: usize = dims
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| CeError::Parse("bad N in channel file header".into()))?;
    let mut entries = Vec::with_capacity(m * n);
    for (row_idx, line) in lines.enumerate() {
        if row_idx >= m {
            return Err(CeError::Parse(format!("more than {m} rows in channel file")));
        }
        let row: Result<Vec<Complex64>> = line.split_whitespace().map(parse_complex).collect();
        let row = row?;
        if row.len() != n {
            return Err(CeError::Parse(format!(
                "row {row_idx} has {} entries, expected {n}",
                row.len()
            )));
        }
        entries.extend(row);
    }
    ChannelMatrix::from_entries(entries, m, n)
}

/// Loads a fixed channel from a file in the `to_fixed_text` format.
pub fn load_fixed(path: &Path) -> Result<ChannelMatrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CeError::io(path.display().to_string(), e))?;
    from_fixed_text(&text)
}

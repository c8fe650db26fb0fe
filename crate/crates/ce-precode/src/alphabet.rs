//! Information alphabets, per-user symbol energies and symbol sampling.

use crate::rng;
use crate::{CeError, Result};
use num_complex::Complex64;
use rand::Rng;

/// Unit-average-energy information alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alphabet {
    /// 16 points on the square grid `(a + bj)/sqrt(10)`, `a, b in {-3,-1,1,3}`.
    Qam16,
    /// Circularly-symmetric complex Gaussian, unit variance.
    Gaussian,
}

impl Alphabet {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qam16" | "16qam" | "16-qam" => Ok(Alphabet::Qam16),
            "gaussian" => Ok(Alphabet::Gaussian),
            other => Err(CeError::Parse(format!("unknown alphabet `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Alphabet::Qam16 => "qam16",
            Alphabet::Gaussian => "gaussian",
        }
    }
}

/// The 16-QAM constellation with exactly unit average energy.
pub fn qam16_points() -> [Complex64; 16] {
    let scale = 1.0 / 10f64.sqrt();
    let levels = [-3.0, -1.0, 1.0, 3.0];
    let mut points = [Complex64::new(0.0, 0.0); 16];
    let mut idx = 0;
    for &a in &levels {
        for &b in &levels {
            points[idx] = Complex64::new(a * scale, b * scale);
            idx += 1;
        }
    }
    points
}

/// Per-user information symbol energies `E_k > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyAllocation {
    energies: Vec<f64>,
}

impl EnergyAllocation {
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        if energies.is_empty() {
            return Err(CeError::Dimension("empty energy allocation".into()));
        }
        if energies.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(CeError::Dimension(format!(
                "energies must be strictly positive and finite: {energies:?}"
            )));
        }
        Ok(EnergyAllocation { energies })
    }

    /// Equal energy `e` for `m` users.
    pub fn equal(e: f64, m: usize) -> Result<Self> {
        Self::new(vec![e; m])
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }
}

/// One drawn symbol vector: raw `u_k` and scaled `sqrt(E_k) u_k`.
#[derive(Debug, Clone)]
pub struct SymbolVector {
    pub raw_symbols: Vec<Complex64>,
    pub scaled_symbols: Vec<Complex64>,
    pub alphabet_kind: Alphabet,
    pub energy_allocation: EnergyAllocation,
}

impl SymbolVector {
    pub fn num_users(&self) -> usize {
        self.raw_symbols.len()
    }
}

/// Draws raw symbols with the given RNG and scales them by `sqrt(E_k)`.
pub fn sample_symbols_with<R: Rng>(
    alphabet: Alphabet,
    energies: &EnergyAllocation,
    rng: &mut R,
) -> SymbolVector {
    let raw: Vec<Complex64> = match alphabet {
        Alphabet::Qam16 => {
            let points = qam16_points();
            (0..energies.len())
                .map(|_| points[rng.gen_range(0..16)])
                .collect()
        }
        Alphabet::Gaussian => (0..energies.len())
            .map(|_| rng::complex_gaussian(rng, 1.0))
            .collect(),
    };
    let scaled = raw
        .iter()
        .zip(energies.energies())
        .map(|(u, &e)| u * e.sqrt())
        .collect();
    SymbolVector {
        raw_symbols: raw,
        scaled_symbols: scaled,
        alphabet_kind: alphabet,
        energy_allocation: energies.clone(),
    }
}

/// Seeded entry point: deterministic given `(alphabet, energies, seed)`.
pub fn sample_symbols(
    alphabet: Alphabet,
    energies: &EnergyAllocation,
    seed: u64,
) -> SymbolVector {
    let mut rng = rng::stream(seed, 0);
    sample_symbols_with(alphabet, energies, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qam16_unit_average_energy() {
        let points = qam16_points();
        let mean: f64 = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / 16.0;
        assert!((mean - 1.0).abs() < 1e-15);
    }

    #[test]
    fn qam16_min_distance() {
        let points = qam16_points();
        let mut min = f64::INFINITY;
        for i in 0..16 {
            for j in 0..16 {
                if i != j {
                    min = min.min((points[i] - points[j]).norm());
                }
            }
        }
        assert!((min - 2.0 / 10f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn qam16_symmetric_under_negation_and_conjugation() {
        let points = qam16_points();
        let contains = |p: Complex64| points.iter().any(|&q| (p - q).norm() < 1e-15);
        for &p in &points {
            assert!(contains(-p));
            assert!(contains(p.conj()));
        }
    }

    #[test]
    fn qam16_samples_are_constellation_points() {
        let energies = EnergyAllocation::equal(1.0, 4).unwrap();
        let points = qam16_points();
        let mut total = 0.0;
        let draws = 25_000; // 4 users x 25k draws = 1e5 symbols
        let mut rng = rng::stream(3, 0);
        for _ in 0..draws {
            let sv = sample_symbols_with(Alphabet::Qam16, &energies, &mut rng);
            for &u in &sv.raw_symbols {
                assert!(points.iter().any(|&q| (u - q).norm() < 1e-15));
                total += u.norm_sqr();
            }
        }
        let mean = total / (4 * draws) as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean symbol energy {mean}");
    }

    #[test]
    fn unit_energies_give_identity_scaling() {
        let energies = EnergyAllocation::equal(1.0, 3).unwrap();
        let sv = sample_symbols(Alphabet::Qam16, &energies, 11);
        assert_eq!(sv.raw_symbols, sv.scaled_symbols);
    }

    #[test]
    fn gaussian_scaled_energy() {
        let energies = EnergyAllocation::new(vec![4.0]).unwrap();
        let mut rng = rng::stream(5, 0);
        let draws = 100_000;
        let mean: f64 = (0..draws)
            .map(|_| {
                sample_symbols_with(Alphabet::Gaussian, &energies, &mut rng).scaled_symbols[0]
                    .norm_sqr()
            })
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 4.0).abs() < 0.1, "mean scaled energy {mean}");
    }

    #[test]
    fn empty_allocation_rejected() {
        assert!(EnergyAllocation::new(vec![]).is_err());
        assert!(EnergyAllocation::new(vec![1.0, 0.0]).is_err());
        assert!(EnergyAllocation::new(vec![1.0, -2.0]).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let energies = EnergyAllocation::equal(2.0, 5).unwrap();
        let a = sample_symbols(Alphabet::Gaussian, &energies, 17);
        let b = sample_symbols(Alphabet::Gaussian, &energies, 17);
        assert_eq!(a.raw_symbols, b.raw_symbols);
        assert_eq!(a.scaled_symbols, b.scaled_symbols);
    }
}

//! Geometric non-negative PAM message constellation and its energy
//! quantizer.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, PlaError, Result};
use crate::numerics::ChiSquaredCdf;

/// Channel and power-budget parameters shared by every workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// N
    pub antennas: u32,
    /// σ²
    pub noise_variance: f64,
    /// L_m
    pub message_levels: usize,
    /// E_tot
    pub total_power: f64,
    /// δ, the ceiling on the message-SER upper bound.
    pub delta: f64,
    /// E_m
    pub message_power: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            antennas: 128,
            noise_variance: 1.0,
            message_levels: 4,
            total_power: 20.0,
            delta: 1e-5,
            message_power: 10.0,
        }
    }
}

impl SystemConfig {
    pub fn gamma_m(&self) -> f64 {
        self.message_power / self.noise_variance
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 {
            return Err(PlaError::invalid("antennas", "must be at least 1"));
        }
        ensure_finite("noise_variance", self.noise_variance)?;
        if self.noise_variance <= 0.0 {
            return Err(PlaError::invalid("noise_variance", "must be positive"));
        }
        if self.message_levels < 2 {
            return Err(PlaError::invalid("message_levels", "must be at least 2"));
        }
        ensure_finite("total_power", self.total_power)?;
        if self.total_power <= 0.0 {
            return Err(PlaError::invalid("total_power", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(PlaError::invalid("delta", "must lie in (0, 1]"));
        }
        ensure_finite("message_power", self.message_power)?;
        if self.message_power <= 0.0 {
            return Err(PlaError::invalid("message_power", "gamma_m must be positive"));
        }
        if self.message_power > self.total_power {
            return Err(PlaError::invalid(
                "message_power",
                format!(
                    "E_m = {} exceeds total_power = {}",
                    self.message_power, self.total_power
                ),
            ));
        }
        Ok(())
    }
}

/// Message constellation `{0, σ²(R−1), …, σ²(R^{L−1}−1)}` and its ML
/// energy thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageConstellation {
    pub noise_variance: f64,
    /// R > 1
    pub ratio: f64,
    /// |m_i|², strictly increasing from 0.
    pub powers: Vec<f64>,
    /// A_i = |m_i|² + σ² = σ² R^{i}.
    pub variances: Vec<f64>,
    /// B_i between A_i and A_{i+1}.
    pub thresholds: Vec<f64>,
}

impl MessageConstellation {
    pub fn levels(&self) -> usize {
        self.powers.len()
    }

    pub fn ln_ratio(&self) -> f64 {
        self.ratio.ln()
    }

    pub fn average_power(&self) -> f64 {
        self.powers.iter().sum::<f64>() / self.levels() as f64
    }
}

/// Root `R > 1` of `Σ_{j<L} R^j = L(γ_m + 1)`.
pub fn solve_ratio(levels: usize, gamma_m: f64) -> Result<f64> {
    if levels < 2 {
        return Err(PlaError::invalid("message_levels", "must be at least 2"));
    }
    ensure_finite("gamma_m", gamma_m)?;
    if gamma_m <= 0.0 {
        return Err(PlaError::invalid("gamma_m", "gamma_m must be positive"));
    }
    let target = levels as f64 * (gamma_m + 1.0);
    // Horner evaluation of the geometric sum and its derivative
    let eval = |r: f64| {
        let (mut s, mut ds) = (0.0, 0.0);
        for _ in 0..levels {
            ds = ds * r + s;
            s = s * r + 1.0;
        }
        (s - target, ds)
    };
    let (mut lo, mut hi) = (1.0, target);
    let mut r = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, df) = eval(r);
        if f == 0.0 {
            return Ok(r);
        }
        if f < 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        let newton = r - f / df;
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - r).abs() <= 1e-15 * r || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        r = next;
    }
    Ok(r)
}

/// ML threshold between zero-mean complex Gaussian energies of variances
/// `a` and `b`: `a·b·ln(b/a)/(b − a)`, the logarithmic-mean form.
///
/// Symmetric in its arguments and tends to `a` as `b → a`.
pub fn log_mean_threshold(a: f64, b: f64) -> f64 {
    let d = (b - a) / a;
    if d == 0.0 {
        return a;
    }
    b * d.ln_1p() / d
}

pub fn message_thresholds(variances: &[f64]) -> Result<Vec<f64>> {
    for (i, &a) in variances.iter().enumerate() {
        ensure_finite("variances", a)?;
        if a <= 0.0 {
            return Err(PlaError::invalid("variances", format!("A[{i}] must be positive")));
        }
    }
    if let Some(i) = variances.windows(2).position(|w| w[1] <= w[0]) {
        return Err(PlaError::NotIncreasing { index: i + 1 });
    }
    Ok(variances
        .windows(2)
        .map(|w| log_mean_threshold(w[0], w[1]))
        .collect())
}

pub fn design_constellation(cfg: &SystemConfig) -> Result<MessageConstellation> {
    if cfg.message_levels < 2 {
        return Err(PlaError::invalid("message_levels", "must be at least 2"));
    }
    ensure_finite("noise_variance", cfg.noise_variance)?;
    if cfg.noise_variance <= 0.0 {
        return Err(PlaError::invalid("noise_variance", "must be positive"));
    }
    let ratio = solve_ratio(cfg.message_levels, cfg.gamma_m())?;
    let sigma2 = cfg.noise_variance;
    let powers: Vec<f64> = (0..cfg.message_levels)
        .map(|i| sigma2 * (ratio.powi(i as i32) - 1.0))
        .collect();
    let variances: Vec<f64> = (0..cfg.message_levels)
        .map(|i| sigma2 * ratio.powi(i as i32))
        .collect();
    let thresholds = message_thresholds(&variances)?;
    Ok(MessageConstellation {
        noise_variance: sigma2,
        ratio,
        powers,
        variances,
        thresholds,
    })
}

/// Energy quantizer. Returns the zero-based cell index.
///
/// Cell 0 is `energy < B₁`; cell `i` (for `1 ≤ i ≤ L−2`) is
/// `B_i ≤ energy ≤ B_{i+1}` (one-based thresholds); the last cell is
/// everything above. An energy equal to an interior threshold goes to the
/// lower of the two cells that contain it; `energy = B₁` goes to cell 1.
pub fn detect_message(energy: f64, thresholds: &[f64]) -> usize {
    match thresholds.first() {
        None => 0,
        Some(&b1) if energy < b1 => 0,
        Some(_) => 1 + thresholds[1..].partition_point(|&b| b < energy),
    }
}

/// Probability that an energy with variance `a` falls outside the cell
/// bounded by `lower` and `upper` (either may be absent).
pub(crate) fn cell_error(
    chi: &ChiSquaredCdf,
    variance: f64,
    lower: Option<f64>,
    upper: Option<f64>,
) -> f64 {
    let n = chi.dof() as f64;
    let below = lower.map_or(0.0, |b| chi.cdf(n * b / variance));
    let above = upper.map_or(0.0, |b| chi.sf(n * b / variance));
    below + above
}

/// Message SER of the tag-free constellation, averaged over equiprobable
/// symbols.
pub fn message_ser_analytic(constellation: &MessageConstellation, antennas: u32) -> Result<f64> {
    let chi = ChiSquaredCdf::new(antennas)?;
    let b = &constellation.thresholds;
    let levels = constellation.levels();
    let total: f64 = constellation
        .variances
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let lower = i.checked_sub(1).map(|j| b[j]);
            let upper = b.get(i).copied();
            cell_error(&chi, a, lower, upper)
        })
        .sum();
    Ok((total / levels as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{EnergySampler, RngStream};
    use proptest::prelude::*;
    use rand::Rng;

    fn cfg(levels: usize, sigma2: f64, em: f64) -> SystemConfig {
        SystemConfig {
            message_levels: levels,
            noise_variance: sigma2,
            message_power: em,
            total_power: em * 10.0,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn ratio_closed_form_two_levels() {
        for &g in &[0.1, 0.5, 1.0, 3.7, 100.0] {
            let r = solve_ratio(2, g).unwrap();
            assert!((r - (2.0 * g + 1.0)).abs() < 1e-12 * r, "γ={g}: {r}");
        }
        assert!((solve_ratio(2, 0.5).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ratio_four_levels_ten_db() {
        let r = solve_ratio(4, 10.0).unwrap();
        let residual = 1.0 + r + r * r + r * r * r - 44.0;
        assert!(residual.abs() < 1e-10, "{residual}");
        // mpmath root
        assert!((r - 3.113_795_094_009_353_5).abs() < 1e-12);
    }

    #[test]
    fn ratio_rejects_nonpositive_snr() {
        assert!(solve_ratio(4, 0.0).is_err());
        assert!(solve_ratio(4, -1.0).is_err());
        assert!(solve_ratio(1, 1.0).is_err());
        let err = design_constellation(&cfg(4, 1.0, 0.0)).unwrap_err();
        assert!(err.to_string().contains("gamma_m must be positive"));
    }

    #[test]
    fn two_level_design() {
        let c = design_constellation(&cfg(2, 1.0, 1.0)).unwrap();
        assert!((c.ratio - 3.0).abs() < 1e-12);
        assert_eq!(c.powers[0], 0.0);
        assert!((c.powers[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn design_is_geometric_and_power_tight() {
        for &(levels, sigma2, em) in &[(4, 1.0, 10.0), (8, 0.5, 3.0), (16, 2.0, 250.0)] {
            let c = design_constellation(&cfg(levels, sigma2, em)).unwrap();
            assert!((c.average_power() - em).abs() < 1e-9 * em);
            assert_eq!(c.powers[0], 0.0);
            for w in c.variances.windows(2) {
                assert!((w[1] / w[0] - c.ratio).abs() < 1e-10 * c.ratio);
            }
            for (i, &b) in c.thresholds.iter().enumerate() {
                assert!(c.variances[i] < b && b < c.variances[i + 1]);
            }
        }
    }

    #[test]
    fn threshold_examples() {
        let b = message_thresholds(&[1.0, std::f64::consts::E]).unwrap()[0];
        assert!((b - 1.581_976_706_869_326_4).abs() < 1e-14);
        let b = message_thresholds(&[1.0, 4.0]).unwrap()[0];
        assert!((b - 1.848_392_481_493_187_5).abs() < 1e-14);
        let b = message_thresholds(&[2.5, 2.5 * (1.0 + 1e-12)]).unwrap()[0];
        assert!((b - 2.5).abs() < 1e-11);
        assert!(matches!(
            message_thresholds(&[1.0, 3.0, 3.0]),
            Err(PlaError::NotIncreasing { index: 2 })
        ));
    }

    #[test]
    fn quantizer_boundaries() {
        let b = [1.5, 4.0, 9.0];
        assert_eq!(detect_message(0.0, &b), 0);
        assert_eq!(detect_message(1.5, &b), 1);
        assert_eq!(detect_message(3.0, &b), 1);
        assert_eq!(detect_message(4.0, &b), 1);
        assert_eq!(detect_message(4.0 + 1e-12, &b), 2);
        assert_eq!(detect_message(9.0, &b), 2);
        assert_eq!(detect_message(9.5, &b), 3);
        assert_eq!(detect_message(1.5, &[1.5]), 1);
    }

    /// argmax_i of the log-likelihood −N ln A_i − N e / A_i, ties to the
    /// lower index.
    fn ml_index(energy: f64, variances: &[f64]) -> usize {
        let mut best = 0;
        let mut best_ll = f64::NEG_INFINITY;
        for (i, &a) in variances.iter().enumerate() {
            let ll = -a.ln() - energy / a;
            if ll > best_ll {
                best_ll = ll;
                best = i;
            }
        }
        best
    }

    #[test]
    fn quantizer_matches_likelihood_argmax() {
        let mut rng = RngStream::new(11, 0);
        for trial in 0..100_000 {
            let levels = [2usize, 4, 8][trial % 3];
            let em = rng.gen_range(0.1..100.0);
            let c = design_constellation(&cfg(levels, rng.gen_range(0.2..3.0), em)).unwrap();
            let top = *c.variances.last().unwrap();
            let e = rng.gen_range(0.0..2.0 * top);
            assert_eq!(detect_message(e, &c.thresholds), ml_index(e, &c.variances));
        }
    }

    #[test]
    fn ser_headline_ten_db() {
        let c = design_constellation(&cfg(4, 1.0, 10.0)).unwrap();
        let p = message_ser_analytic(&c, 128).unwrap();
        assert!(p < 1e-5, "{p}");
    }

    #[test]
    fn ser_decreases_with_antennas() {
        let c = design_constellation(&cfg(4, 1.0, 5.0)).unwrap();
        let p: Vec<f64> = [16, 32, 64, 128]
            .iter()
            .map(|&n| message_ser_analytic(&c, n).unwrap())
            .collect();
        assert!(p.windows(2).all(|w| w[1] < w[0]), "{p:?}");
        let c2 = design_constellation(&cfg(2, 1.0, 1.0)).unwrap();
        let mut last = 1.0;
        for n in 1..200 {
            let p = message_ser_analytic(&c2, n).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ser_matches_monte_carlo() {
        let c = design_constellation(&cfg(2, 1.0, 1.0)).unwrap();
        let n = 8;
        let p = message_ser_analytic(&c, n).unwrap();
        let sampler = EnergySampler::new(n, 1.0).unwrap();
        let mut rng = RngStream::new(12, 0);
        let trials = 10_000_000u64;
        let mut errors = 0u64;
        for _ in 0..trials {
            let i = rng.gen_range(0..2);
            let e = sampler.sample(c.powers[i], &mut rng);
            if detect_message(e, &c.thresholds) != i {
                errors += 1;
            }
        }
        let sd = (p * (1.0 - p) * trials as f64).sqrt();
        let expected = p * trials as f64;
        assert!((errors as f64 - expected).abs() < 3.0 * sd, "{errors} vs {expected}±{sd}");
    }

    proptest! {
        #[test]
        fn threshold_between_neighbours(a in 1e-3f64..1e3, step in 1e-9f64..50.0) {
            let b = a * (1.0 + step);
            let t = log_mean_threshold(a, b);
            prop_assert!(a < t && t < b);
            prop_assert!((t - log_mean_threshold(b, a)).abs() <= 1e-12 * t);
        }
    }
}

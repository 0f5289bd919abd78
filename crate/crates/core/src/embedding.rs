//! Message-based one-bit tag modulation.
//!
//! Tag bit 0 adds no power; tag bit 1 multiplies the symbol's received
//! variance by `r_i = e^{k_i}` with `0 < k_i < ln R`, so each symbol carries
//! a tag point strictly between itself and the next message level.

use serde::{Deserialize, Serialize};

use crate::constellation::{cell_error, detect_message, log_mean_threshold, MessageConstellation};
use crate::error::{PlaError, Result};
use crate::numerics::ChiSquaredCdf;
use crate::simulate::SerEstimate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagEmbedding {
    pub base: MessageConstellation,
    /// k_i = ln r_i
    pub k: Vec<f64>,
    /// A_{i,1} = A_i (tag bit 0)
    pub a1: Vec<f64>,
    /// A_{i,2} = r_i A_{i,1} (tag bit 1)
    pub a2: Vec<f64>,
    /// Message thresholds between A_{i,2} and A_{i+1,1}.
    pub b_prime: Vec<f64>,
    /// Tag thresholds between A_{i,1} and A_{i,2}.
    pub c: Vec<f64>,
    /// Per-symbol flag: `k_i` inside `(0, ln R)`. Always all-true for
    /// embeddings from [`build_embedding`].
    pub valid: Vec<bool>,
}

impl TagEmbedding {
    pub fn levels(&self) -> usize {
        self.k.len()
    }

    pub fn is_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    /// Transmitted power `|x|² = |m_i|² + |t_{i,j}|²` for symbol `i`
    /// (zero-based) and tag bit `bit`.
    pub fn symbol_power(&self, symbol: usize, bit: bool) -> f64 {
        if bit {
            self.base.powers[symbol] + self.tag_powers()[symbol]
        } else {
            self.base.powers[symbol]
        }
    }

    /// Received variance `A_{i,j}`.
    pub fn variance(&self, symbol: usize, bit: bool) -> f64 {
        if bit {
            self.a2[symbol]
        } else {
            self.a1[symbol]
        }
    }

    /// `|t_{i,2}|² = A_{i,2} − A_{i,1}` per symbol.
    pub fn tag_powers(&self) -> Vec<f64> {
        self.a1
            .iter()
            .zip(&self.k)
            .map(|(&a, &k)| a * k.exp_m1())
            .collect()
    }

    fn assemble(base: &MessageConstellation, k: Vec<f64>, a2: Vec<f64>) -> Self {
        let a1 = base.variances.clone();
        let levels = a1.len();
        let b_prime = (0..levels - 1)
            .map(|i| log_mean_threshold(a2[i], a1[i + 1]))
            .collect();
        let c = (0..levels).map(|i| log_mean_threshold(a1[i], a2[i])).collect();
        let ln_r = base.ln_ratio();
        let valid = k.iter().map(|&ki| ki > 0.0 && ki < ln_r).collect();
        Self {
            base: base.clone(),
            k,
            a1,
            a2,
            b_prime,
            c,
            valid,
        }
    }

    fn check_interleaving(&self) -> Result<()> {
        let levels = self.levels();
        for i in 0..levels {
            let ok_tag = self.a1[i] < self.c[i] && self.c[i] < self.a2[i];
            let ok_msg = i + 1 == levels
                || (self.a2[i] < self.b_prime[i] && self.b_prime[i] < self.a1[i + 1]);
            if !(ok_tag && ok_msg) {
                return Err(PlaError::invalid(
                    "k",
                    format!("thresholds of symbol {i} do not interleave at k = {}", self.k[i]),
                ));
            }
        }
        Ok(())
    }
}

/// Builds the tag embedding for log tag-power ratios `k` (one per symbol).
pub fn build_embedding(base: &MessageConstellation, k: &[f64]) -> Result<TagEmbedding> {
    if k.len() != base.levels() {
        return Err(PlaError::invalid(
            "k",
            format!("expected {} entries, got {}", base.levels(), k.len()),
        ));
    }
    let ln_r = base.ln_ratio();
    for (index, &value) in k.iter().enumerate() {
        if !(value > 0.0 && value < ln_r) {
            return Err(PlaError::OutOfBox {
                index,
                value,
                lower: 0.0,
                upper: ln_r,
            });
        }
    }
    let a2 = base
        .variances
        .iter()
        .zip(k)
        .map(|(&a, &ki)| a * ki.exp())
        .collect();
    let emb = TagEmbedding::assemble(base, k.to_vec(), a2);
    emb.check_interleaving()?;
    Ok(emb)
}

/// Uniform-tag baseline: the same absolute tag power `|t_{i,2}|² = t_power`
/// on every symbol. Symbols whose implied `k_i` leaves `(0, ln R)` are
/// flagged in [`TagEmbedding::valid`] rather than rejected.
pub fn uniform_embedding(base: &MessageConstellation, t_power: f64) -> Result<TagEmbedding> {
    if !(t_power >= 0.0 && t_power.is_finite()) {
        return Err(PlaError::invalid("t_power", "must be finite and nonnegative"));
    }
    let k = base.variances.iter().map(|&a| (t_power / a).ln_1p()).collect();
    let a2 = base.variances.iter().map(|&a| a + t_power).collect();
    Ok(TagEmbedding::assemble(base, k, a2))
}

/// Average tag power `(1/2L) Σ A_{i,1}(e^{k_i} − 1)`.
pub fn tag_power(emb: &TagEmbedding) -> f64 {
    emb.tag_powers().iter().sum::<f64>() / (2 * emb.levels()) as f64
}

/// Two-step detection: message cell against `B′`, then the tag bit
/// against that cell's `C_i` (`true` for tag bit 1).
pub fn detect(energy: f64, emb: &TagEmbedding) -> (usize, bool) {
    let i = detect_message(energy, &emb.b_prime);
    (i, energy > emb.c[i])
}

/// Message SER with tags embedded, both tag bits equiprobable.
pub fn message_ser_embedded(emb: &TagEmbedding, antennas: u32) -> Result<f64> {
    let chi = ChiSquaredCdf::new(antennas)?;
    let b = &emb.b_prime;
    let total: f64 = (0..emb.levels())
        .map(|i| {
            let lower = i.checked_sub(1).map(|j| b[j]);
            let upper = b.get(i).copied();
            0.5 * (cell_error(&chi, emb.a1[i], lower, upper)
                + cell_error(&chi, emb.a2[i], lower, upper))
        })
        .sum();
    Ok((total / emb.levels() as f64).clamp(0.0, 1.0))
}

/// Tag SER given a correctly detected message:
/// `(1/2L) Σ [1 + G(N u(r_i)) − G(N v(r_i))]`,
/// `u(r) = ln r/(r − 1)`, `v(r) = r ln r/(r − 1)`.
pub fn tag_ser_analytic(emb: &TagEmbedding, antennas: u32) -> Result<f64> {
    let chi = ChiSquaredCdf::new(antennas)?;
    let n = antennas as f64;
    let total: f64 = emb
        .k
        .iter()
        .map(|&k| {
            if k == 0.0 {
                return 1.0;
            }
            let r = k.exp();
            let u = k / k.exp_m1();
            let v = r * u;
            // 1 + G(Nu) − G(Nv) = G(Nu) + (1 − G(Nv))
            chi.cdf(n * u) + chi.sf(n * v)
        })
        .sum();
    Ok((total / (2 * emb.levels()) as f64).clamp(0.0, 1.0))
}

/// Same quantity as [`tag_ser_analytic`], evaluated from the tag
/// thresholds directly: `1 − ½[G(NC_i/A_{i,1}) + 1 − G(NC_i/A_{i,2})]`.
pub fn tag_ser_from_thresholds(emb: &TagEmbedding, antennas: u32) -> Result<f64> {
    let chi = ChiSquaredCdf::new(antennas)?;
    let n = antennas as f64;
    let total: f64 = (0..emb.levels())
        .map(|i| chi.sf(n * emb.c[i] / emb.a1[i]) + chi.cdf(n * emb.c[i] / emb.a2[i]))
        .sum();
    Ok((total / (2 * emb.levels()) as f64).clamp(0.0, 1.0))
}

/// Message-SER upper bound: for each adjacent pair, the upward error of the
/// tagged point plus the downward error of the next untagged point,
/// `(1/L) Σ_{i<L} [1 − G(NB′_i/A_{i,2}) + G(NB′_i/A_{i+1,1})]`.
pub fn message_ser_upper(emb: &TagEmbedding, antennas: u32) -> Result<f64> {
    let chi = ChiSquaredCdf::new(antennas)?;
    let n = antennas as f64;
    let total: f64 = emb
        .b_prime
        .iter()
        .enumerate()
        .map(|(i, &b)| chi.sf(n * b / emb.a2[i]) + chi.cdf(n * b / emb.a1[i + 1]))
        .sum();
    Ok((total / emb.levels() as f64).clamp(0.0, 1.0))
}

/// Analytic error rates of an embedding plus optional Monte Carlo
/// estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub p_em: f64,
    pub p_et: f64,
    pub p_em_upper: f64,
    pub empirical_p_em: Option<SerEstimate>,
    pub empirical_p_et: Option<SerEstimate>,
}

pub fn error_report(emb: &TagEmbedding, antennas: u32) -> Result<ErrorReport> {
    Ok(ErrorReport {
        p_em: message_ser_embedded(emb, antennas)?,
        p_et: tag_ser_analytic(emb, antennas)?,
        p_em_upper: message_ser_upper(emb, antennas)?,
        empirical_p_em: None,
        empirical_p_et: None,
    })
}

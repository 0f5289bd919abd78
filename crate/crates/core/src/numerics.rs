//! Complex chi-squared law of the normalized received energy, and the
//! seeded random streams used to sample it.
//!
//! For `N` receive antennas, `Z = ‖y‖² / (|x|² + σ²)` is a sum of `N`
//! unit-mean exponentials, so its CDF is
//! `G(z) = 1 − e^{−z} Σ_{L=0}^{N−1} z^L / L!`.

use rand::{Rng, RngCore};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{ensure_finite, PlaError, Result};

/// Largest antenna count for which the CDF is guaranteed overflow-free.
pub const MAX_ANTENNAS: u32 = 1 << 16;

/// CDF, survival function and density of the complex chi-squared law with
/// `N` complex degrees of freedom (a Gamma(N, 1) variable).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquaredCdf {
    dof: u32,
    /// ln((N−1)!)
    ln_fact: f64,
}

impl ChiSquaredCdf {
    pub fn new(antennas: u32) -> Result<Self> {
        if antennas == 0 {
            return Err(PlaError::invalid("antennas", "must be at least 1"));
        }
        if antennas > MAX_ANTENNAS {
            return Err(PlaError::invalid(
                "antennas",
                format!("must not exceed {MAX_ANTENNAS}"),
            ));
        }
        let ln_fact = (2..antennas).map(|k| (k as f64).ln()).sum();
        Ok(Self {
            dof: antennas,
            ln_fact,
        })
    }

    pub fn dof(&self) -> u32 {
        self.dof
    }

    /// `G(z)`. Negative or NaN arguments are a caller bug; use
    /// [`chi2_cdf`] for checked evaluation.
    pub fn cdf(&self, z: f64) -> f64 {
        self.split(z).0
    }

    /// `1 − G(z)`, computed without cancellation in the upper tail.
    pub fn sf(&self, z: f64) -> f64 {
        self.split(z).1
    }

    /// Density `f_Z(z) = z^{N−1} e^{−z} / (N−1)!`.
    pub fn pdf(&self, z: f64) -> f64 {
        debug_assert!(z >= 0.0, "pdf of negative argument {z}");
        if z <= 0.0 {
            return if self.dof == 1 { 1.0 } else { 0.0 };
        }
        if z.is_infinite() {
            return 0.0;
        }
        let n1 = (self.dof - 1) as f64;
        (n1 * z.ln() - z - self.ln_fact).exp()
    }

    /// `f_Z'(z) = f_Z(z)·((N−1)/z − 1)`.
    pub fn pdf_derivative(&self, z: f64) -> f64 {
        if z <= 0.0 {
            // only N ≤ 2 has a nonzero one-sided limit at the origin
            return match self.dof {
                1 => -1.0,
                2 => 1.0,
                _ => 0.0,
            };
        }
        let n1 = (self.dof - 1) as f64;
        self.pdf(z) * (n1 / z - 1.0)
    }

    /// Returns `(G(z), 1 − G(z))`, each evaluated from whichever series
    /// keeps it free of cancellation.
    fn split(&self, z: f64) -> (f64, f64) {
        debug_assert!(z >= 0.0 && !z.is_nan(), "chi2 argument {z}");
        if z <= 0.0 {
            return (0.0, 1.0);
        }
        if z.is_infinite() {
            return (1.0, 0.0);
        }
        let n = self.dof as f64;
        if z < n {
            // lower tail: e^{−z} Σ_{L≥N} z^L/L!, factored as
            // e^{−z} z^N/N! · Σ_m z^m / ((N+1)…(N+m))
            let ln_lead = n * z.ln() - z - (self.ln_fact + n.ln());
            let mut term = 1.0;
            let mut sum = 1.0;
            let mut m = 1.0;
            loop {
                term *= z / (n + m);
                sum += term;
                if term <= sum * f64::EPSILON * 0.25 {
                    break;
                }
                m += 1.0;
            }
            let lower = clamp_probability((ln_lead + sum.ln()).exp());
            (lower, clamp_probability(1.0 - lower))
        } else {
            // upper tail, the finite sum itself: start at the largest term
            // t_{N−1} = e^{−z} z^{N−1}/(N−1)! in log form and walk down with
            // t_{L−1} = t_L · L / z (ratio < 1 since z ≥ N).
            let ln_top = (n - 1.0) * z.ln() - z - self.ln_fact;
            let mut term = 1.0;
            let mut sum = 1.0;
            for l in (1..self.dof).rev() {
                term *= l as f64 / z;
                sum += term;
                if term <= sum * f64::EPSILON * 0.25 {
                    break;
                }
            }
            let upper = clamp_probability((ln_top + sum.ln()).exp());
            (clamp_probability(1.0 - upper), upper)
        }
    }
}

#[cfg(debug_assertions)]
static MAX_CLAMP_VIOLATION: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);

fn clamp_probability(p: f64) -> f64 {
    let clamped = p.clamp(0.0, 1.0);
    #[cfg(debug_assertions)]
    {
        use std::sync::atomic::Ordering;
        let violation = (p - clamped).abs();
        if violation > 0.0 {
            MAX_CLAMP_VIOLATION.fetch_max(violation.to_bits(), Ordering::Relaxed);
        }
    }
    clamped
}

/// Largest amount by which a raw CDF value left [0, 1] before clamping.
/// Always zero in release builds.
pub fn max_clamp_violation() -> f64 {
    #[cfg(debug_assertions)]
    {
        f64::from_bits(MAX_CLAMP_VIOLATION.load(std::sync::atomic::Ordering::Relaxed))
    }
    #[cfg(not(debug_assertions))]
    {
        0.0
    }
}

/// Checked `G(z)` for `N` antennas.
pub fn chi2_cdf(antennas: u32, z: f64) -> Result<f64> {
    ensure_finite("z", z)?;
    if z < 0.0 {
        return Err(PlaError::invalid("z", format!("must be nonnegative, got {z}")));
    }
    Ok(ChiSquaredCdf::new(antennas)?.cdf(z))
}

/// A reproducible random stream identified by `(master_seed, stream_index)`.
///
/// Backed by ChaCha8 with the stream index mapped onto the cipher's stream
/// selector, so distinct indices give non-overlapping keystreams.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_index);
        Self {
            master_seed,
            stream_index,
            inner,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Sampler for the normalized received energy `‖y‖²/N`.
///
/// Draws `(|x|² + σ²)·Z′/N` with `Z′ ~ Gamma(N, 1)`, the sum of `N`
/// unit-mean exponentials. This is the exact law of `‖h x + n‖²/N` for
/// i.i.d. circularly symmetric `h ~ CN(0, 1)` and `n ~ CN(0, σ²)`; the
/// vector-level path is available as [`sample_received_energy_full`].
#[derive(Debug, Clone, Copy)]
pub struct EnergySampler {
    antennas: u32,
    sigma2: f64,
    gamma: Gamma<f64>,
}

impl EnergySampler {
    pub fn new(antennas: u32, sigma2: f64) -> Result<Self> {
        if antennas == 0 {
            return Err(PlaError::invalid("antennas", "must be at least 1"));
        }
        ensure_finite("sigma2", sigma2)?;
        if sigma2 <= 0.0 {
            return Err(PlaError::invalid("sigma2", "must be positive"));
        }
        let gamma = Gamma::new(antennas as f64, 1.0)
            .map_err(|e| PlaError::invalid("antennas", e.to_string()))?;
        Ok(Self {
            antennas,
            sigma2,
            gamma,
        })
    }

    pub fn antennas(&self) -> u32 {
        self.antennas
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// One draw of `‖y‖²/N` for a transmitted power `|x|²`.
    #[inline]
    pub fn sample<R: RngCore + ?Sized>(&self, signal_power: f64, rng: &mut R) -> f64 {
        let z: f64 = self.gamma.sample(rng);
        (signal_power + self.sigma2) * z / self.antennas as f64
    }

    /// Energy drawn for a given total received variance `A = |x|² + σ²`.
    #[inline]
    pub fn sample_with_variance<R: RngCore + ?Sized>(&self, variance: f64, rng: &mut R) -> f64 {
        let z: f64 = self.gamma.sample(rng);
        variance * z / self.antennas as f64
    }
}

/// `‖y‖²/N` via the chi-squared shortcut (see [`EnergySampler`]).
pub fn sample_received_energy<R: RngCore + ?Sized>(
    signal_power: f64,
    sigma2: f64,
    antennas: u32,
    rng: &mut R,
) -> Result<f64> {
    ensure_finite("signal_power", signal_power)?;
    if signal_power < 0.0 {
        return Err(PlaError::invalid("signal_power", "must be nonnegative"));
    }
    Ok(EnergySampler::new(antennas, sigma2)?.sample(signal_power, rng))
}

/// `‖y‖²/N` with `h` and `n` materialized entry by entry: `y = h·x + n`,
/// `x = sqrt(|x|²)`.
pub fn sample_received_energy_full<R: RngCore + ?Sized>(
    signal_power: f64,
    sigma2: f64,
    antennas: u32,
    rng: &mut R,
) -> Result<f64> {
    ensure_finite("signal_power", signal_power)?;
    ensure_finite("sigma2", sigma2)?;
    if signal_power < 0.0 {
        return Err(PlaError::invalid("signal_power", "must be nonnegative"));
    }
    if sigma2 <= 0.0 {
        return Err(PlaError::invalid("sigma2", "must be positive"));
    }
    if antennas == 0 {
        return Err(PlaError::invalid("antennas", "must be at least 1"));
    }
    let amplitude = signal_power.sqrt();
    let h_scale = std::f64::consts::FRAC_1_SQRT_2;
    let n_scale = (sigma2 / 2.0).sqrt();
    let mut energy = 0.0;
    for _ in 0..antennas {
        let h_re: f64 = rng.sample(StandardNormal);
        let h_im: f64 = rng.sample(StandardNormal);
        let n_re: f64 = rng.sample(StandardNormal);
        let n_im: f64 = rng.sample(StandardNormal);
        let y_re = h_scale * h_re * amplitude + n_scale * n_re;
        let y_im = h_scale * h_im * amplitude + n_scale * n_im;
        energy += y_re * y_re + y_im * y_im;
    }
    Ok(energy / antennas as f64)
}

//! Seeded Monte Carlo for the embedded link and the authentication
//! pipeline.
//!
//! Trials are cut into fixed-size chunks and chunk `c` always draws from
//! `RngStream(master_seed, c)`. Workers take chunks round-robin and only
//! integer counts are merged, so results do not depend on the worker
//! count.

use hmac::{Hmac, Mac};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::constellation::{design_constellation, SystemConfig};
use crate::embedding::{
    build_embedding, detect, message_ser_embedded, tag_ser_analytic, uniform_embedding, TagEmbedding,
};
use crate::error::{PlaError, Result};
use crate::numerics::{sample_received_energy_full, ChiSquaredCdf, EnergySampler, RngStream};

/// Trials per random stream.
pub const CHUNK_TRIALS: u64 = 1 << 16;

/// Identifier of the keyed hash used for tags.
pub const HASH_PRIMITIVE: &str = "HMAC-SHA256 (counter-mode expansion, MSB-first bits)";

const WILSON_Z: f64 = 1.959_963_984_540_054;

/// Error count with its Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerEstimate {
    pub errors: u64,
    pub trials: u64,
    pub rate: f64,
    pub wilson95: (f64, f64),
}

impl SerEstimate {
    pub fn new(errors: u64, trials: u64) -> Self {
        if trials == 0 {
            return Self {
                errors,
                trials,
                rate: 0.0,
                wilson95: (0.0, 1.0),
            };
        }
        let n = trials as f64;
        let p = errors as f64 / n;
        let z2 = WILSON_Z * WILSON_Z;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Self {
            errors,
            trials,
            rate: p,
            wilson95: ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p)),
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        self.wilson95.0 <= p && p <= self.wilson95.1
    }

    /// Binomial standard deviation of the count at rate `p`.
    pub fn count_sd(&self, p: f64) -> f64 {
        (self.trials as f64 * p * (1.0 - p)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelPath {
    /// `(|x|² + σ²)·Gamma(N, 1)/N`
    #[default]
    Direct,
    /// Draws `h` and `n` entry by entry.
    FullVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub trials: u64,
    pub master_seed: u64,
    pub workers: usize,
    pub embedding: TagEmbedding,
    pub antennas: u32,
    pub noise_variance: f64,
    #[serde(default)]
    pub channel: ChannelPath,
}

impl SimConfig {
    fn validate(&self) -> Result<EnergySampler> {
        if self.trials == 0 {
            return Err(PlaError::invalid("trials", "must be positive"));
        }
        if self.workers == 0 {
            return Err(PlaError::invalid("workers", "must be positive"));
        }
        EnergySampler::new(self.antennas, self.noise_variance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct Counts {
    trials: u64,
    message_errors: u64,
    message_correct: u64,
    tag_errors_given_correct: u64,
    tag_errors: u64,
}

impl Counts {
    fn merge(self, other: Counts) -> Counts {
        Counts {
            trials: self.trials + other.trials,
            message_errors: self.message_errors + other.message_errors,
            message_correct: self.message_correct + other.message_correct,
            tag_errors_given_correct: self.tag_errors_given_correct + other.tag_errors_given_correct,
            tag_errors: self.tag_errors + other.tag_errors,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerSummary {
    pub message: SerEstimate,
    /// Tag errors over trials whose message was detected correctly.
    pub tag_conditional: SerEstimate,
    /// Tag errors over all trials.
    pub tag_unconditional: SerEstimate,
}

/// Runs `work(chunk_index, chunk_len)` over every chunk of `total` items on
/// `workers` threads and folds the per-chunk results with `merge`.
pub(crate) fn run_chunks<T, W, M>(total: u64, workers: usize, identity: T, work: W, merge: M) -> T
where
    T: Copy + Send,
    W: Fn(u64, u64) -> T + Sync,
    M: Fn(T, T) -> T + Sync,
{
    let chunks = total.div_ceil(CHUNK_TRIALS);
    let len = |c: u64| CHUNK_TRIALS.min(total - c * CHUNK_TRIALS);
    let workers = (workers as u64).clamp(1, chunks.max(1));
    if workers == 1 {
        return (0..chunks).fold(identity, |acc, c| merge(acc, work(c, len(c))));
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let work = &work;
                let merge = &merge;
                scope.spawn(move || {
                    (w..chunks)
                        .step_by(workers as usize)
                        .fold(identity, |acc, c| merge(acc, work(c, len(c))))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation worker panicked"))
            .fold(identity, &merge)
    })
}

pub fn simulate_ser(cfg: &SimConfig) -> Result<SerSummary> {
    let sampler = cfg.validate()?;
    let emb = &cfg.embedding;
    let levels = emb.levels();
    let sigma2 = cfg.noise_variance;
    let powers: Vec<[f64; 2]> = (0..levels)
        .map(|i| [emb.a1[i] - sigma2, emb.a2[i] - sigma2])
        .map(|[p0, p1]| [p0.max(0.0), p1.max(0.0)])
        .collect();
    let channel = cfg.channel;
    let antennas = cfg.antennas;

    let counts = run_chunks(
        cfg.trials,
        cfg.workers,
        Counts::default(),
        |chunk, len| {
            let mut rng = RngStream::new(cfg.master_seed, chunk);
            let mut c = Counts {
                trials: len,
                ..Counts::default()
            };
            for _ in 0..len {
                let symbol = rng.gen_range(0..levels);
                let bit: bool = rng.gen();
                let power = powers[symbol][bit as usize];
                let energy = match channel {
                    ChannelPath::Direct => sampler.sample(power, &mut rng),
                    ChannelPath::FullVector => {
                        sample_received_energy_full(power, sigma2, antennas, &mut rng)
                            .expect("validated inputs")
                    }
                };
                let (i, b) = detect(energy, emb);
                if b != bit {
                    c.tag_errors += 1;
                }
                if i == symbol {
                    c.message_correct += 1;
                    if b != bit {
                        c.tag_errors_given_correct += 1;
                    }
                } else {
                    c.message_errors += 1;
                }
            }
            c
        },
        Counts::merge,
    );
    Ok(SerSummary {
        message: SerEstimate::new(counts.message_errors, counts.trials),
        tag_conditional: SerEstimate::new(counts.tag_errors_given_correct, counts.message_correct),
        tag_unconditional: SerEstimate::new(counts.tag_errors, counts.trials),
    })
}

/// Pearson goodness-of-fit of `‖y‖²/A_{i,j}` against the complex
/// chi-squared law, one test per constellation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub symbol: usize,
    pub tag_bit: bool,
    pub statistic: f64,
    pub critical_1pct: f64,
    pub pass: bool,
}

/// Equiprobable bins; with 21 bins the reference law has 20 degrees of
/// freedom, an integer Gamma shape our own CDF evaluates.
const FIT_BINS: usize = 21;

fn quantile(chi: &ChiSquaredCdf, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while chi.cdf(hi) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn energy_goodness_of_fit(
    emb: &TagEmbedding,
    antennas: u32,
    noise_variance: f64,
    draws: u64,
    master_seed: u64,
    channel: ChannelPath,
) -> Result<Vec<FitResult>> {
    let sampler = EnergySampler::new(antennas, noise_variance)?;
    let chi = ChiSquaredCdf::new(antennas)?;
    let edges: Vec<f64> = (1..FIT_BINS)
        .map(|b| quantile(&chi, b as f64 / FIT_BINS as f64))
        .collect();
    // real chi-squared with 2m dof is 2·Gamma(m, 1)
    let reference = ChiSquaredCdf::new(((FIT_BINS - 1) / 2) as u32)?;
    let critical = 2.0 * quantile(&reference, 0.99);
    let mut out = Vec::new();
    let mut stream = 0;
    for symbol in 0..emb.levels() {
        for bit in [false, true] {
            let variance = emb.variance(symbol, bit);
            let power = (variance - noise_variance).max(0.0);
            let mut rng = RngStream::new(master_seed, stream);
            stream += 1;
            let mut counts = [0u64; FIT_BINS];
            for _ in 0..draws {
                let energy = match channel {
                    ChannelPath::Direct => sampler.sample(power, &mut rng),
                    ChannelPath::FullVector => {
                        sample_received_energy_full(power, noise_variance, antennas, &mut rng)?
                    }
                };
                let z = energy * antennas as f64 / variance;
                counts[edges.partition_point(|&e| e < z)] += 1;
            }
            let expected = draws as f64 / FIT_BINS as f64;
            let statistic = counts
                .iter()
                .map(|&c| (c as f64 - expected).powi(2) / expected)
                .sum::<f64>();
            out.push(FitResult {
                symbol,
                tag_bit: bit,
                statistic,
                critical_1pct: critical,
                pass: statistic < critical,
            });
        }
    }
    Ok(out)
}

/// Tag bits `M = hash(b, key)`, truncated or counter-extended to `count`
/// bits.
///
/// Block `j` is `HMAC-SHA256(key, j ‖ bit_len ‖ packed_bits)`, bits read
/// MSB first.
pub fn keyed_hash_bits(message_bits: &[bool], key: &[u8], count: usize) -> Vec<bool> {
    let mut packed = vec![0u8; message_bits.len().div_ceil(8)];
    for (i, &b) in message_bits.iter().enumerate() {
        if b {
            packed[i / 8] |= 0x80 >> (i % 8);
        }
    }
    let mut out = Vec::with_capacity(count);
    let mut block = 0u32;
    while out.len() < count {
        let mut mac = Hmac::<Sha256>::new_from_slice(key).expect("HMAC accepts any key length");
        mac.update(&block.to_be_bytes());
        mac.update(&(message_bits.len() as u64).to_be_bytes());
        mac.update(&packed);
        let digest = mac.finalize().into_bytes();
        for byte in digest {
            for shift in (0..8).rev() {
                if out.len() < count {
                    out.push((byte >> shift) & 1 == 1);
                }
            }
        }
        block += 1;
    }
    out
}

fn bits_per_symbol(levels: usize) -> Result<usize> {
    if levels < 2 || !levels.is_power_of_two() {
        return Err(PlaError::invalid(
            "message_levels",
            "packets need a power-of-two constellation",
        ));
    }
    Ok(levels.trailing_zeros() as usize)
}

/// A packet ready for transmission: message bits, one tag bit per symbol,
/// and the per-symbol amplitudes `x = sqrt(|m|² + |t|²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthPacket {
    pub message_bits: Vec<bool>,
    pub key: Vec<u8>,
    pub tag_bits: Vec<bool>,
    /// Zero-based message index per symbol.
    pub symbols: Vec<usize>,
    pub amplitudes: Vec<f64>,
}

fn symbols_from_bits(bits: &[bool], per_symbol: usize) -> Vec<usize> {
    bits.chunks(per_symbol)
        .map(|c| c.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize))
        .collect()
}

fn bits_from_symbols(symbols: &[usize], per_symbol: usize) -> Vec<bool> {
    symbols
        .iter()
        .flat_map(|&s| (0..per_symbol).rev().map(move |j| (s >> j) & 1 == 1))
        .collect()
}

impl AuthPacket {
    /// Legitimate packet: tags are the keyed hash of the message.
    pub fn new(message_bits: Vec<bool>, key: &[u8], emb: &TagEmbedding) -> Result<Self> {
        let per_symbol = bits_per_symbol(emb.levels())?;
        if message_bits.is_empty() || !message_bits.len().is_multiple_of(per_symbol) {
            return Err(PlaError::invalid(
                "message_bits",
                format!("length must be a positive multiple of {per_symbol}"),
            ));
        }
        let count = message_bits.len() / per_symbol;
        let tags = keyed_hash_bits(&message_bits, key, count);
        Self::with_tags(message_bits, key, tags, emb)
    }

    /// Packet carrying arbitrary tag bits, e.g. a forger's guess.
    pub fn with_tags(
        message_bits: Vec<bool>,
        key: &[u8],
        tag_bits: Vec<bool>,
        emb: &TagEmbedding,
    ) -> Result<Self> {
        let per_symbol = bits_per_symbol(emb.levels())?;
        let symbols = symbols_from_bits(&message_bits, per_symbol);
        if tag_bits.len() != symbols.len() {
            return Err(PlaError::invalid("tag_bits", "need exactly one tag bit per symbol"));
        }
        let sigma2 = emb.base.noise_variance;
        let amplitudes = symbols
            .iter()
            .zip(&tag_bits)
            .map(|(&s, &t)| (emb.variance(s, t) - sigma2).max(0.0).sqrt())
            .collect();
        Ok(Self {
            message_bits,
            key: key.to_vec(),
            tag_bits,
            symbols,
            amplitudes,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Channel<'a> {
    /// Received energy equals its mean `A_{i,j}`.
    Noiseless,
    Rayleigh(&'a EnergySampler),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Demodulated message bits differ from those sent.
    MessageCorrupted,
    /// Message intact but received tag differs from the recomputed MAC.
    TagMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthOutcome {
    Accepted,
    Rejected(RejectReason),
}

/// Sends `packet` through `channel`, detects every symbol, recomputes the
/// MAC from the detected message and compares it with the detected tags.
pub fn authenticate_roundtrip<R: Rng + ?Sized>(
    packet: &AuthPacket,
    emb: &TagEmbedding,
    channel: Channel<'_>,
    rng: &mut R,
) -> AuthOutcome {
    let per_symbol = emb.levels().trailing_zeros() as usize;
    let sigma2 = emb.base.noise_variance;
    let mut symbols = Vec::with_capacity(packet.symbols.len());
    let mut tags = Vec::with_capacity(packet.symbols.len());
    for &amplitude in &packet.amplitudes {
        let power = amplitude * amplitude;
        let energy = match channel {
            Channel::Noiseless => power + sigma2,
            Channel::Rayleigh(sampler) => sampler.sample(power, rng),
        };
        let (s, t) = detect(energy, emb);
        symbols.push(s);
        tags.push(t);
    }
    let bits = bits_from_symbols(&symbols, per_symbol);
    let recomputed = keyed_hash_bits(&bits, &packet.key, tags.len());
    if recomputed == tags {
        AuthOutcome::Accepted
    } else if bits != packet.message_bits {
        AuthOutcome::Rejected(RejectReason::MessageCorrupted)
    } else {
        AuthOutcome::Rejected(RejectReason::TagMismatch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthTrialConfig {
    pub packets: u64,
    pub symbols_per_packet: usize,
    pub master_seed: u64,
    pub workers: usize,
    pub key: Vec<u8>,
    /// Replace the MAC with uniformly random tag bits (no key knowledge).
    pub forge: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuthSummary {
    pub packets: u64,
    pub accepted: u64,
    pub rejected_message: u64,
    pub rejected_tag: u64,
    pub acceptance: SerEstimate,
}

#[derive(Debug, Clone, Copy, Default)]
struct AuthCounts {
    packets: u64,
    accepted: u64,
    rejected_message: u64,
    rejected_tag: u64,
}

/// Random packets through the Rayleigh channel, legitimate or forged.
pub fn run_authentication(
    emb: &TagEmbedding,
    antennas: u32,
    cfg: &AuthTrialConfig,
) -> Result<AuthSummary> {
    let per_symbol = bits_per_symbol(emb.levels())?;
    if cfg.packets == 0 || cfg.symbols_per_packet == 0 || cfg.workers == 0 {
        return Err(PlaError::invalid(
            "packets",
            "packets, symbols_per_packet and workers must be positive",
        ));
    }
    let sampler = EnergySampler::new(antennas, emb.base.noise_variance)?;
    let bit_len = cfg.symbols_per_packet * per_symbol;
    let counts = run_chunks(
        cfg.packets,
        cfg.workers,
        AuthCounts::default(),
        |chunk, len| {
            let mut rng = RngStream::new(cfg.master_seed, chunk);
            let mut c = AuthCounts {
                packets: len,
                ..AuthCounts::default()
            };
            for _ in 0..len {
                let bits: Vec<bool> = (0..bit_len).map(|_| rng.gen()).collect();
                let packet = if cfg.forge {
                    let tags: Vec<bool> = (0..cfg.symbols_per_packet).map(|_| rng.gen()).collect();
                    AuthPacket::with_tags(bits, &cfg.key, tags, emb)
                } else {
                    AuthPacket::new(bits, &cfg.key, emb)
                }
                .expect("packet shape checked above");
                match authenticate_roundtrip(&packet, emb, Channel::Rayleigh(&sampler), &mut rng) {
                    AuthOutcome::Accepted => c.accepted += 1,
                    AuthOutcome::Rejected(RejectReason::MessageCorrupted) => c.rejected_message += 1,
                    AuthOutcome::Rejected(RejectReason::TagMismatch) => c.rejected_tag += 1,
                }
            }
            c
        },
        |a, b| AuthCounts {
            packets: a.packets + b.packets,
            accepted: a.accepted + b.accepted,
            rejected_message: a.rejected_message + b.rejected_message,
            rejected_tag: a.rejected_tag + b.rejected_tag,
        },
    );
    Ok(AuthSummary {
        packets: counts.packets,
        accepted: counts.accepted,
        rejected_message: counts.rejected_message,
        rejected_tag: counts.rejected_tag,
        acceptance: SerEstimate::new(counts.accepted, counts.packets),
    })
}

/// Settings for the message-SNR sweep comparing message-based and uniform
/// tag embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub antennas: u32,
    pub noise_variance: f64,
    pub message_levels: usize,
    pub snr_db: Vec<f64>,
    /// SNR at which both schemes are tuned to the same message SER.
    pub reference_snr_db: f64,
    /// Analytic message SER both schemes hit at the reference SNR.
    pub target_message_ser: f64,
    pub trials: u64,
    pub master_seed: u64,
    pub workers: usize,
    #[serde(default)]
    pub channel: ChannelPath,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            antennas: 128,
            noise_variance: 1.0,
            message_levels: 4,
            snr_db: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            reference_snr_db: 10.0,
            target_message_ser: 5e-6,
            trials: 1_000_000,
            master_seed: 1,
            workers: 1,
            channel: ChannelPath::Direct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub gamma_m: f64,
    pub p_em_analytic: f64,
    pub p_em: SerEstimate,
    pub p_et_analytic: f64,
    pub p_et: SerEstimate,
    pub uniform_p_em_analytic: f64,
    pub uniform_p_et_analytic: f64,
    pub uniform_p_et: SerEstimate,
    /// Every symbol of the uniform baseline keeps its tag point below the
    /// next message level.
    pub uniform_valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    /// Proposed scheme: `k_i = fraction · ln R` on every symbol.
    pub tag_fraction: f64,
    /// Uniform scheme: `|t_{i,2}|²` on every symbol.
    pub uniform_tag_power: f64,
    pub rows: Vec<SweepRow>,
}

fn snr_to_gamma(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn constellation_at(cfg: &SweepConfig, db: f64) -> Result<crate::constellation::MessageConstellation> {
    let gamma = snr_to_gamma(db);
    design_constellation(&SystemConfig {
        antennas: cfg.antennas,
        noise_variance: cfg.noise_variance,
        message_levels: cfg.message_levels,
        message_power: gamma * cfg.noise_variance,
        total_power: f64::MAX,
        delta: 0.5,
    })
}

/// Bisection for the increasing map `x ↦ value(x)` on `(lo, hi)` hitting
/// `target`.
fn bisect<F: Fn(f64) -> Result<f64>>(value: F, mut lo: f64, mut hi: f64, target: f64) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if value(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Sweeps message SNR for both embedding schemes. Both are tuned at the
/// reference SNR to the same analytic message SER; the proposed scheme
/// keeps its tag fraction of `ln R` and the uniform scheme keeps its
/// absolute tag power at every other SNR.
pub fn snr_sweep(cfg: &SweepConfig) -> Result<Sweep> {
    let reference = constellation_at(cfg, cfg.reference_snr_db)?;
    let tag_free = message_ser_embedded(&uniform_embedding(&reference, 0.0)?, cfg.antennas)?;
    if tag_free >= cfg.target_message_ser {
        return Err(PlaError::Infeasible(format!(
            "tag-free message SER {tag_free:e} already exceeds target {:e}",
            cfg.target_message_ser
        )));
    }
    let levels = cfg.message_levels;
    let ln_r = reference.ln_ratio();
    let fraction = bisect(
        |f| {
            let e = build_embedding(&reference, &vec![f * ln_r; levels])?;
            message_ser_embedded(&e, cfg.antennas)
        },
        1e-9,
        1.0 - 1e-9,
        cfg.target_message_ser,
    )?;
    let max_uniform = reference.variances[0] * (reference.ratio - 1.0);
    let uniform_power = bisect(
        |t| message_ser_embedded(&uniform_embedding(&reference, t)?, cfg.antennas),
        0.0,
        max_uniform,
        cfg.target_message_ser,
    )?;

    let mut rows = Vec::with_capacity(cfg.snr_db.len());
    for (row, &db) in cfg.snr_db.iter().enumerate() {
        let base = constellation_at(cfg, db)?;
        let proposed = build_embedding(&base, &vec![fraction * base.ln_ratio(); levels])?;
        let uniform = uniform_embedding(&base, uniform_power)?;
        let seed = cfg
            .master_seed
            .wrapping_add((row as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let sim = |emb: &TagEmbedding, seed: u64| {
            simulate_ser(&SimConfig {
                trials: cfg.trials,
                master_seed: seed,
                workers: cfg.workers,
                embedding: emb.clone(),
                antennas: cfg.antennas,
                noise_variance: cfg.noise_variance,
                channel: cfg.channel,
            })
        };
        let p = sim(&proposed, seed)?;
        let u = sim(&uniform, seed ^ 0xA5A5_A5A5_A5A5_A5A5)?;
        rows.push(SweepRow {
            snr_db: db,
            gamma_m: snr_to_gamma(db),
            p_em_analytic: message_ser_embedded(&proposed, cfg.antennas)?,
            p_em: p.message,
            p_et_analytic: tag_ser_analytic(&proposed, cfg.antennas)?,
            p_et: p.tag_conditional,
            uniform_p_em_analytic: message_ser_embedded(&uniform, cfg.antennas)?,
            uniform_p_et_analytic: tag_ser_analytic(&uniform, cfg.antennas)?,
            uniform_p_et: u.tag_conditional,
            uniform_valid: uniform.is_valid(),
        });
    }
    Ok(Sweep {
        tag_fraction: fraction,
        uniform_tag_power: uniform_power,
        rows,
    })
}

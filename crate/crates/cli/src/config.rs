//! Run configuration: a TOML file (or a previous run's manifest) with CLI
//! overrides layered on top.

use std::path::Path;

use ncpla::constellation::SystemConfig;
use ncpla::optimize::{AllocationParams, BarrierParams};
use ncpla::simulate::{ChannelPath, SweepConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::manifest::RunManifest;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub system: SystemSection,
    pub embedding: EmbeddingSection,
    pub optimize: OptimizeSection,
    pub tradeoff: TradeoffSection,
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub antennas: u32,
    pub noise_variance: f64,
    pub message_levels: usize,
    /// E_m. Wins over `message_snr_db` when both are present and agree.
    pub message_power: Option<f64>,
    /// γ_m in dB.
    pub message_snr_db: Option<f64>,
    pub total_power: f64,
    pub delta: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        let d = SystemConfig::default();
        Self {
            antennas: d.antennas,
            noise_variance: d.noise_variance,
            message_levels: d.message_levels,
            message_power: None,
            message_snr_db: None,
            total_power: d.total_power,
            delta: d.delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    /// `k_i = tag_ratio · ln R` on every symbol.
    pub tag_ratio: f64,
    /// Explicit per-symbol `k`; overrides `tag_ratio`.
    pub k: Option<Vec<f64>>,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self {
            tag_ratio: 0.5,
            k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    /// One run per entry; empty means `system.total_power` only.
    pub total_powers: Vec<f64>,
    pub grid_points: usize,
    pub alpha_tolerance: f64,
    pub barrier: BarrierParams,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        let d = AllocationParams::default();
        Self {
            total_powers: Vec::new(),
            grid_points: d.grid_points,
            alpha_tolerance: d.alpha_tolerance,
            barrier: d.barrier,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TradeoffSection {
    pub deltas: Vec<f64>,
    /// One curve per entry; empty means `system.total_power` only.
    pub total_powers: Vec<f64>,
}

impl Default for TradeoffSection {
    fn default() -> Self {
        Self {
            deltas: vec![1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3],
            total_powers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
    pub snr_db: Vec<f64>,
    pub reference_snr_db: f64,
    pub target_message_ser: f64,
    pub full_vector: bool,
    /// Draws per constellation point for the energy goodness-of-fit test.
    pub fit_draws: u64,
    pub key: String,
    pub packets: u64,
    pub symbols_per_packet: usize,
    pub forgeries: u64,
    pub forgery_symbols: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let d = SweepConfig::default();
        Self {
            trials: 10_000_000,
            seed: d.master_seed,
            workers: 1,
            snr_db: d.snr_db,
            reference_snr_db: d.reference_snr_db,
            target_message_ser: d.target_message_ser,
            full_vector: false,
            fit_draws: 10_000,
            key: "ncpla-demo-key".into(),
            packets: 100_000,
            symbols_per_packet: 32,
            forgeries: 1 << 20,
            forgery_symbols: 10,
        }
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub trials: Option<u64>,
    pub snr_db: Option<f64>,
    pub tag_ratio: Option<f64>,
    pub full_vector: bool,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn bad(path: &str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_string(),
        reason: reason.into(),
    }
}

impl Config {
    /// Reads a TOML config, or a `.json` run manifest whose embedded config
    /// is reused verbatim.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            let mut de = serde_json::Deserializer::from_str(&text);
            let manifest: RunManifest =
                serde_path_to_error::deserialize(&mut de).map_err(|e| bad(&e.path().to_string(), e.inner().to_string()))?;
            return Ok(manifest.config);
        }
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let reason = e.inner().message().to_string();
            bad(if path == "." { "<root>" } else { &path }, reason)
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.simulate.seed = s;
        }
        if let Some(w) = o.workers {
            self.simulate.workers = w;
        }
        if let Some(t) = o.trials {
            self.simulate.trials = t;
        }
        if let Some(db) = o.snr_db {
            self.system.message_snr_db = Some(db);
            self.system.message_power = None;
        }
        if let Some(r) = o.tag_ratio {
            self.embedding.tag_ratio = r;
            self.embedding.k = None;
        }
        if o.full_vector {
            self.simulate.full_vector = true;
        }
    }

    /// Fills in both forms of the message power so the snapshot written to
    /// the manifest is self-describing.
    pub fn resolve(&mut self) -> Result<(), CliError> {
        let sigma2 = self.system.noise_variance;
        let power = match (self.system.message_power, self.system.message_snr_db) {
            (Some(p), Some(db)) => {
                let from_db = db_to_linear(db) * sigma2;
                if (from_db - p).abs() > 1e-9 * p.abs().max(1e-300) {
                    return Err(bad(
                        "system.message_snr_db",
                        format!("{db} dB disagrees with system.message_power = {p}"),
                    ));
                }
                p
            }
            (Some(p), None) => p,
            (None, Some(db)) => db_to_linear(db) * sigma2,
            (None, None) => SystemConfig::default().message_power,
        };
        self.system.message_power = Some(power);
        self.system.message_snr_db = Some(linear_to_db(power / sigma2));
        self.validate()
    }

    pub fn system_config(&self) -> SystemConfig {
        let s = &self.system;
        SystemConfig {
            antennas: s.antennas,
            noise_variance: s.noise_variance,
            message_levels: s.message_levels,
            total_power: s.total_power,
            delta: s.delta,
            message_power: s.message_power.unwrap_or(SystemConfig::default().message_power),
        }
    }

    pub fn allocation_params(&self) -> AllocationParams {
        AllocationParams {
            grid_points: self.optimize.grid_points,
            alpha_tolerance: self.optimize.alpha_tolerance,
            barrier: self.optimize.barrier,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        let s = &self.simulate;
        SweepConfig {
            antennas: self.system.antennas,
            noise_variance: self.system.noise_variance,
            message_levels: self.system.message_levels,
            snr_db: s.snr_db.clone(),
            reference_snr_db: s.reference_snr_db,
            target_message_ser: s.target_message_ser,
            trials: s.trials,
            master_seed: s.seed,
            workers: s.workers,
            channel: if s.full_vector {
                ChannelPath::FullVector
            } else {
                ChannelPath::Direct
            },
        }
    }

    pub fn optimize_powers(&self) -> Vec<f64> {
        if self.optimize.total_powers.is_empty() {
            vec![self.system.total_power]
        } else {
            self.optimize.total_powers.clone()
        }
    }

    pub fn tradeoff_powers(&self) -> Vec<f64> {
        if self.tradeoff.total_powers.is_empty() {
            vec![self.system.total_power]
        } else {
            self.tradeoff.total_powers.clone()
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let s = &self.system;
        if s.antennas == 0 || s.antennas > ncpla::numerics::MAX_ANTENNAS {
            return Err(bad(
                "system.antennas",
                format!("must lie in 1..={}", ncpla::numerics::MAX_ANTENNAS),
            ));
        }
        if !(s.noise_variance.is_finite() && s.noise_variance > 0.0) {
            return Err(bad("system.noise_variance", "must be positive and finite"));
        }
        if s.message_levels < 2 {
            return Err(bad("system.message_levels", "must be at least 2"));
        }
        let p = s.message_power.unwrap_or(0.0);
        if !(p.is_finite() && p > 0.0) {
            return Err(bad("system.message_power", "gamma_m must be positive"));
        }
        if !(s.total_power.is_finite() && s.total_power > 0.0) {
            return Err(bad("system.total_power", "must be positive and finite"));
        }
        if !(s.delta > 0.0 && s.delta <= 1.0) {
            return Err(bad("system.delta", "must lie in (0, 1]"));
        }
        let e = &self.embedding;
        match &e.k {
            Some(k) if k.len() != s.message_levels => {
                return Err(bad(
                    "embedding.k",
                    format!("expected {} entries, got {}", s.message_levels, k.len()),
                ))
            }
            _ => {}
        }
        if !(e.tag_ratio > 0.0 && e.tag_ratio < 1.0) {
            return Err(bad("embedding.tag_ratio", "must lie in (0, 1)"));
        }
        for (name, powers) in [
            ("optimize.total_powers", &self.optimize.total_powers),
            ("tradeoff.total_powers", &self.tradeoff.total_powers),
        ] {
            if let Some(j) = powers.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
                return Err(bad(&format!("{name}[{j}]"), "must be positive and finite"));
            }
        }
        if self.optimize.grid_points < 3 {
            return Err(bad("optimize.grid_points", "must be at least 3"));
        }
        if !(self.optimize.alpha_tolerance > 0.0 && self.optimize.alpha_tolerance < 0.1) {
            return Err(bad("optimize.alpha_tolerance", "must lie in (0, 0.1)"));
        }
        let b = &self.optimize.barrier;
        if !(b.initial_t > 0.0 && b.mu > 1.0 && b.gap_tolerance > 0.0 && b.centering_tolerance > 0.0) {
            return Err(bad(
                "optimize.barrier",
                "need initial_t > 0, mu > 1 and positive tolerances",
            ));
        }
        if self.tradeoff.deltas.is_empty() {
            return Err(bad("tradeoff.deltas", "must not be empty"));
        }
        if let Some(j) = self.tradeoff.deltas.iter().position(|d| !(*d > 0.0 && *d <= 1.0)) {
            return Err(bad(&format!("tradeoff.deltas[{j}]"), "must lie in (0, 1]"));
        }
        let m = &self.simulate;
        for (name, v) in [
            ("simulate.trials", m.trials),
            ("simulate.workers", m.workers as u64),
            ("simulate.fit_draws", m.fit_draws),
            ("simulate.packets", m.packets),
            ("simulate.symbols_per_packet", m.symbols_per_packet as u64),
            ("simulate.forgeries", m.forgeries),
            ("simulate.forgery_symbols", m.forgery_symbols as u64),
        ] {
            if v == 0 {
                return Err(bad(name, "must be positive"));
            }
        }
        if m.snr_db.is_empty() || m.snr_db.iter().any(|d| !d.is_finite()) {
            return Err(bad("simulate.snr_db", "must be a nonempty list of finite values"));
        }
        if !(m.target_message_ser > 0.0 && m.target_message_ser < 1.0) {
            return Err(bad("simulate.target_message_ser", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

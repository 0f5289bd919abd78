use serde::{Deserialize, Serialize};

use crate::config::Config;
use ncpla::optimize::BarrierParams;

pub const FLOAT_FORMAT: &str = "csv: {:.16e} (17 significant digits); json: shortest round-trip";

/// Everything needed to rerun a command. Written next to its outputs as
/// `manifest.json`; `--config manifest.json` replays it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Resolved config, flag overrides applied.
    pub config: Config,
    pub master_seed: u64,
    pub workers: usize,
    pub message_power: f64,
    pub message_snr_db: f64,
    pub solver: BarrierParams,
    pub hash_primitive: String,
    pub float_format: String,
    pub wall_clock_seconds: f64,
    /// Output files relative to the manifest's directory.
    pub outputs: Vec<String>,
}

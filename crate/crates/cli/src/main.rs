use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ncpla_cli::commands;
use ncpla_cli::output::OutputDir;
use ncpla_cli::{CliError, Config, Overrides};

#[derive(Parser)]
#[command(name = "ncpla", version, about = "Message-based tag embedding for non-coherent massive SIMO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Constellation, thresholds and analytic error rates for one embedding.
    Design(DesignArgs),
    /// Tag-SER-optimal embedding and power split, one H(alpha) curve per E_tot.
    Optimize(Common),
    /// Minimal tag SER against the message-SER ceiling delta.
    Tradeoff(Common),
    /// Monte Carlo SNR sweep, energy fit check and authentication trials.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    trials: Option<u64>,
    /// Message SNR in dB (gamma_m = 10^(dB/10)).
    #[arg(long, allow_negative_numbers = true)]
    snr_db: Option<f64>,
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    common: Common,
    /// k_i = ratio * ln R on every symbol.
    #[arg(long)]
    tag_ratio: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Draw every antenna's channel and noise instead of the energy directly.
    #[arg(long)]
    full_vector: bool,
}

type Runner = fn(&Config, &mut OutputDir) -> Result<u8, CliError>;

fn run(cli: Cli) -> Result<u8, CliError> {
    let (common, mut overrides, runner): (Common, Overrides, Runner) = match cli.command {
        Command::Design(a) => (
            a.common,
            Overrides {
                tag_ratio: a.tag_ratio,
                ..Overrides::default()
            },
            commands::design,
        ),
        Command::Optimize(c) => (c, Overrides::default(), commands::optimize),
        Command::Tradeoff(c) => (c, Overrides::default(), commands::tradeoff),
        Command::Simulate(a) => (
            a.common,
            Overrides {
                full_vector: a.full_vector,
                ..Overrides::default()
            },
            commands::simulate,
        ),
    };
    overrides.seed = common.seed;
    overrides.workers = common.workers;
    overrides.trials = common.trials;
    overrides.snr_db = common.snr_db;

    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    cfg.apply(&overrides);
    cfg.resolve()?;
    let mut out = OutputDir::create(&common.out)?;
    let code = runner(&cfg, &mut out)?;
    eprintln!("wrote {} files to {}", out.written().len(), out.path().display());
    Ok(code)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

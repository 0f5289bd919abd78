use std::time::Instant;

use ncpla::constellation::{design_constellation, MessageConstellation, SystemConfig};
use ncpla::embedding::{build_embedding, error_report, tag_power, ErrorReport, TagEmbedding};
use ncpla::optimize::{allocate_power_with, tradeoff_curve_with, AllocationSample, SolveResult, SolveStatus};
use ncpla::simulate::{
    energy_goodness_of_fit, snr_sweep, run_authentication, AuthSummary, AuthTrialConfig,
    ChannelPath, FitResult, SweepRow, HASH_PRIMITIVE,
};
use ncpla::PlaError;
use serde::Serialize;

use crate::config::{linear_to_db, Config};
use crate::error::{CliError, EXIT_INFEASIBLE, EXIT_OK, EXIT_SOLVER};
use crate::manifest::{RunManifest, FLOAT_FORMAT};
use crate::output::{fmt_f64, fmt_opt, power_tag, OutputDir};

pub const H_ALPHA_HEADER: [&str; 4] = ["alpha", "tag_ser", "message_ser_upper", "feasible"];
pub const TRADEOFF_HEADER: [&str; 3] = ["delta", "min_tag_ser", "alpha_star"];
pub const SWEEP_HEADER: [&str; 16] = [
    "snr_db",
    "gamma_m",
    "p_em_analytic",
    "p_em_empirical",
    "p_em_lo",
    "p_em_hi",
    "p_et_analytic",
    "p_et_empirical",
    "p_et_lo",
    "p_et_hi",
    "uniform_p_em_analytic",
    "uniform_p_et_analytic",
    "uniform_p_et_empirical",
    "uniform_p_et_lo",
    "uniform_p_et_hi",
    "uniform_valid",
];
pub const FIT_HEADER: [&str; 5] = ["symbol", "tag_bit", "statistic", "critical_1pct", "pass"];

fn finish(
    out: &mut OutputDir,
    command: &str,
    cfg: &Config,
    started: Instant,
) -> Result<(), CliError> {
    let mut outputs = out.written().to_vec();
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        tool: "ncpla".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config: cfg.clone(),
        master_seed: cfg.simulate.seed,
        workers: cfg.simulate.workers,
        message_power: cfg.system.message_power.unwrap_or_default(),
        message_snr_db: cfg.system.message_snr_db.unwrap_or_default(),
        solver: cfg.optimize.barrier,
        hash_primitive: HASH_PRIMITIVE.into(),
        float_format: FLOAT_FORMAT.into(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs,
    };
    out.write_json("manifest.json", &manifest)
}

#[derive(Serialize)]
struct SystemReport {
    antennas: u32,
    noise_variance: f64,
    message_levels: usize,
    message_power: f64,
    message_snr_db: f64,
    gamma_m: f64,
}

impl SystemReport {
    fn new(cfg: &SystemConfig) -> Self {
        Self {
            antennas: cfg.antennas,
            noise_variance: cfg.noise_variance,
            message_levels: cfg.message_levels,
            message_power: cfg.message_power,
            message_snr_db: linear_to_db(cfg.gamma_m()),
            gamma_m: cfg.gamma_m(),
        }
    }
}

#[derive(Serialize)]
struct ConstellationReport<'a> {
    ratio: f64,
    ln_ratio: f64,
    powers: &'a [f64],
    variances: &'a [f64],
    thresholds: &'a [f64],
    average_power: f64,
}

#[derive(Serialize)]
struct EmbeddingReport<'a> {
    k: &'a [f64],
    a1: &'a [f64],
    a2: &'a [f64],
    b_prime: &'a [f64],
    c: &'a [f64],
    tag_powers: Vec<f64>,
    average_tag_power: f64,
    valid: &'a [bool],
}

#[derive(Serialize)]
struct DesignReport<'a> {
    system: SystemReport,
    constellation: ConstellationReport<'a>,
    embedding: EmbeddingReport<'a>,
    errors: ErrorReport,
}

fn message_constellation(cfg: &Config) -> Result<MessageConstellation, CliError> {
    // the design itself only needs E_m; the total budget is an optimize input
    let sys = SystemConfig {
        total_power: f64::MAX,
        ..cfg.system_config()
    };
    Ok(design_constellation(&sys)?)
}

fn configured_embedding(cfg: &Config, base: &MessageConstellation) -> Result<TagEmbedding, CliError> {
    let k = match &cfg.embedding.k {
        Some(k) => k.clone(),
        None => vec![cfg.embedding.tag_ratio * base.ln_ratio(); base.levels()],
    };
    build_embedding(base, &k).map_err(|e| match e {
        PlaError::OutOfBox { .. } | PlaError::NotIncreasing { .. } => CliError::Config {
            path: "embedding.k".into(),
            reason: e.to_string(),
        },
        e => e.into(),
    })
}

pub fn design(cfg: &Config, out: &mut OutputDir) -> Result<u8, CliError> {
    let started = Instant::now();
    let sys = cfg.system_config();
    let base = message_constellation(cfg)?;
    let emb = configured_embedding(cfg, &base)?;
    let report = DesignReport {
        system: SystemReport::new(&sys),
        constellation: ConstellationReport {
            ratio: base.ratio,
            ln_ratio: base.ln_ratio(),
            powers: &base.powers,
            variances: &base.variances,
            thresholds: &base.thresholds,
            average_power: base.average_power(),
        },
        embedding: EmbeddingReport {
            k: &emb.k,
            a1: &emb.a1,
            a2: &emb.a2,
            b_prime: &emb.b_prime,
            c: &emb.c,
            tag_powers: emb.tag_powers(),
            average_tag_power: tag_power(&emb),
            valid: &emb.valid,
        },
        errors: error_report(&emb, sys.antennas)?,
    };
    out.write_json("design.json", &report)?;
    println!(
        "R = {:.6}, P_em = {:.3e}, P_et = {:.3e}, P_em^u = {:.3e}",
        base.ratio, report.errors.p_em, report.errors.p_et, report.errors.p_em_upper
    );
    finish(out, "design", cfg, started)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum RunStatus {
    Optimal,
    Infeasible,
    SolverFailure,
}

#[derive(Serialize)]
struct OptimizeRun {
    total_power: f64,
    status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    curve_csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    h_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    unimodal: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tag_budget_exhausted: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solve: Option<SolveResult>,
    /// Smallest reachable message-SER bound when δ is out of reach.
    #[serde(skip_serializing_if = "Option::is_none")]
    min_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct OptimizeReport {
    antennas: u32,
    noise_variance: f64,
    message_levels: usize,
    delta: f64,
    runs: Vec<OptimizeRun>,
}

fn h_alpha_rows(samples: &[AllocationSample]) -> Vec<Vec<String>> {
    samples
        .iter()
        .map(|s| {
            vec![
                fmt_f64(s.alpha),
                fmt_f64(s.tag_ser),
                fmt_f64(s.message_ser_upper),
                s.feasible.to_string(),
            ]
        })
        .collect()
}

pub fn optimize(cfg: &Config, out: &mut OutputDir) -> Result<u8, CliError> {
    let started = Instant::now();
    let sys = cfg.system_config();
    let params = cfg.allocation_params();
    let mut runs = Vec::new();
    let mut code = EXIT_OK;
    for total_power in cfg.optimize_powers() {
        let per = SystemConfig { total_power, ..sys.clone() };
        match allocate_power_with(&per, params) {
            Ok(r) => {
                let name = format!("h_alpha_etot_{}.csv", power_tag(total_power));
                out.write_csv(&name, &H_ALPHA_HEADER, &h_alpha_rows(&r.samples))?;
                let failed = r.solve.as_ref().is_some_and(|s| s.status != SolveStatus::Optimal);
                if failed {
                    code = code.max(EXIT_SOLVER);
                }
                println!(
                    "E_tot = {total_power}: alpha0 = {:.6}, alpha* = {:.6}, H(alpha*) = {:.6e}",
                    r.alpha0, r.alpha_star, r.h_star
                );
                runs.push(OptimizeRun {
                    total_power,
                    status: if failed { RunStatus::SolverFailure } else { RunStatus::Optimal },
                    curve_csv: Some(name),
                    alpha0: Some(r.alpha0),
                    alpha_star: Some(r.alpha_star),
                    h_star: Some(r.h_star),
                    unimodal: Some(r.unimodal),
                    tag_budget_exhausted: Some(r.tag_budget_exhausted),
                    solve: r.solve,
                    min_bound: None,
                    error: None,
                });
            }
            Err(e @ PlaError::DeltaUnreachable { min_bound, .. }) => {
                eprintln!("E_tot = {total_power}: {e}");
                code = code.max(EXIT_INFEASIBLE);
                runs.push(OptimizeRun {
                    total_power,
                    status: RunStatus::Infeasible,
                    curve_csv: None,
                    alpha0: None,
                    alpha_star: None,
                    h_star: None,
                    unimodal: None,
                    tag_budget_exhausted: None,
                    solve: None,
                    min_bound: Some(min_bound),
                    error: Some(e.to_string()),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    out.write_json(
        "optimize.json",
        &OptimizeReport {
            antennas: sys.antennas,
            noise_variance: sys.noise_variance,
            message_levels: sys.message_levels,
            delta: sys.delta,
            runs,
        },
    )?;
    finish(out, "optimize", cfg, started)?;
    Ok(code)
}

#[derive(Serialize)]
struct TradeoffCurve {
    total_power: f64,
    csv: String,
    points: Vec<ncpla::optimize::TradeoffPoint>,
}

#[derive(Serialize)]
struct TradeoffReport {
    antennas: u32,
    noise_variance: f64,
    message_levels: usize,
    curves: Vec<TradeoffCurve>,
}

pub fn tradeoff(cfg: &Config, out: &mut OutputDir) -> Result<u8, CliError> {
    let started = Instant::now();
    let sys = cfg.system_config();
    let params = cfg.allocation_params();
    let mut curves = Vec::new();
    let mut code = EXIT_OK;
    for total_power in cfg.tradeoff_powers() {
        let per = SystemConfig { total_power, ..sys.clone() };
        let points = tradeoff_curve_with(&per, &cfg.tradeoff.deltas, params)?;
        if points.iter().all(|p| p.min_tag_ser.is_none()) {
            eprintln!("E_tot = {total_power}: no delta in the grid is reachable");
            code = code.max(EXIT_INFEASIBLE);
        }
        for p in points.iter().filter(|p| p.error.is_some()) {
            eprintln!("E_tot = {total_power}, delta = {:e}: {}", p.delta, p.error.as_deref().unwrap_or(""));
        }
        let rows: Vec<Vec<String>> = points
            .iter()
            .map(|p| vec![fmt_f64(p.delta), fmt_opt(p.min_tag_ser), fmt_opt(p.alpha_star)])
            .collect();
        let name = format!("tradeoff_etot_{}.csv", power_tag(total_power));
        out.write_csv(&name, &TRADEOFF_HEADER, &rows)?;
        curves.push(TradeoffCurve {
            total_power,
            csv: name,
            points,
        });
    }
    out.write_json(
        "tradeoff.json",
        &TradeoffReport {
            antennas: sys.antennas,
            noise_variance: sys.noise_variance,
            message_levels: sys.message_levels,
            curves,
        },
    )?;
    finish(out, "tradeoff", cfg, started)?;
    Ok(code)
}

#[derive(Serialize)]
struct AuthReport {
    summary: AuthSummary,
    predicted_acceptance: f64,
    /// (observed − predicted) in binomial standard deviations.
    z_score: f64,
}

impl AuthReport {
    fn new(summary: AuthSummary, predicted: f64) -> Self {
        let sd = (predicted * (1.0 - predicted) / summary.packets as f64).sqrt();
        Self {
            summary,
            predicted_acceptance: predicted,
            z_score: (summary.acceptance.rate - predicted) / sd,
        }
    }
}

#[derive(Serialize)]
struct AuthenticationReport {
    hash_primitive: &'static str,
    reference_snr_db: f64,
    per_symbol_message_ser: f64,
    per_symbol_tag_ser: f64,
    legitimate: AuthReport,
    forgery: AuthReport,
}

#[derive(Serialize)]
struct SimulateReport {
    antennas: u32,
    noise_variance: f64,
    message_levels: usize,
    trials: u64,
    master_seed: u64,
    channel: ChannelPath,
    reference_snr_db: f64,
    target_message_ser: f64,
    tag_fraction: f64,
    uniform_tag_power: f64,
    rows: Vec<SweepRow>,
    goodness_of_fit: Vec<FitResult>,
    authentication: AuthenticationReport,
}

fn sweep_rows(rows: &[SweepRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                fmt_f64(r.snr_db),
                fmt_f64(r.gamma_m),
                fmt_f64(r.p_em_analytic),
                fmt_f64(r.p_em.rate),
                fmt_f64(r.p_em.wilson95.0),
                fmt_f64(r.p_em.wilson95.1),
                fmt_f64(r.p_et_analytic),
                fmt_f64(r.p_et.rate),
                fmt_f64(r.p_et.wilson95.0),
                fmt_f64(r.p_et.wilson95.1),
                fmt_f64(r.uniform_p_em_analytic),
                fmt_f64(r.uniform_p_et_analytic),
                fmt_f64(r.uniform_p_et.rate),
                fmt_f64(r.uniform_p_et.wilson95.0),
                fmt_f64(r.uniform_p_et.wilson95.1),
                r.uniform_valid.to_string(),
            ]
        })
        .collect()
}

// Distinct master seeds for the sub-experiments of one run.
const FIT_SEED_OFFSET: u64 = 0x0F17;
const AUTH_SEED_OFFSET: u64 = 0xA0A0;
const FORGE_SEED_OFFSET: u64 = 0xF0F0;

pub fn simulate(cfg: &Config, out: &mut OutputDir) -> Result<u8, CliError> {
    let started = Instant::now();
    let sys = cfg.system_config();
    let sim = &cfg.simulate;
    if !sys.message_levels.is_power_of_two() {
        return Err(CliError::Config {
            path: "system.message_levels".into(),
            reason: "packets carry log2(L) bits per symbol, so L must be a power of two".into(),
        });
    }
    let floor = 30.0 / sim.target_message_ser;
    if (sim.trials as f64) < floor {
        eprintln!(
            "warning: {} trials is below 30/target = {:.0}; message-SER estimates near the target are noisy",
            sim.trials, floor
        );
    }
    let sweep_cfg = cfg.sweep_config();
    let sweep = snr_sweep(&sweep_cfg)?;
    out.write_csv("snr_sweep.csv", &SWEEP_HEADER, &sweep_rows(&sweep.rows))?;

    let reference = design_constellation(&SystemConfig {
        message_power: crate::config::db_to_linear(sim.reference_snr_db) * sys.noise_variance,
        total_power: f64::MAX,
        ..sys.clone()
    })?;
    let emb = build_embedding(
        &reference,
        &vec![sweep.tag_fraction * reference.ln_ratio(); reference.levels()],
    )?;

    let fits = energy_goodness_of_fit(
        &emb,
        sys.antennas,
        sys.noise_variance,
        sim.fit_draws,
        sim.seed.wrapping_add(FIT_SEED_OFFSET),
        sweep_cfg.channel,
    )?;
    let fit_rows: Vec<Vec<String>> = fits
        .iter()
        .map(|f| {
            vec![
                f.symbol.to_string(),
                f.tag_bit.to_string(),
                fmt_f64(f.statistic),
                fmt_f64(f.critical_1pct),
                f.pass.to_string(),
            ]
        })
        .collect();
    out.write_csv("goodness_of_fit.csv", &FIT_HEADER, &fit_rows)?;

    let errors = error_report(&emb, sys.antennas)?;
    let key = sim.key.as_bytes().to_vec();
    let legit = run_authentication(
        &emb,
        sys.antennas,
        &AuthTrialConfig {
            packets: sim.packets,
            symbols_per_packet: sim.symbols_per_packet,
            master_seed: sim.seed.wrapping_add(AUTH_SEED_OFFSET),
            workers: sim.workers,
            key: key.clone(),
            forge: false,
        },
    )?;
    let forged = run_authentication(
        &emb,
        sys.antennas,
        &AuthTrialConfig {
            packets: sim.forgeries,
            symbols_per_packet: sim.forgery_symbols,
            master_seed: sim.seed.wrapping_add(FORGE_SEED_OFFSET),
            workers: sim.workers,
            key,
            forge: true,
        },
    )?;
    let l = sim.symbols_per_packet as i32;
    let predicted = (1.0 - errors.p_em).powi(l) * (1.0 - errors.p_et).powi(l);
    let authentication = AuthenticationReport {
        hash_primitive: HASH_PRIMITIVE,
        reference_snr_db: sim.reference_snr_db,
        per_symbol_message_ser: errors.p_em,
        per_symbol_tag_ser: errors.p_et,
        legitimate: AuthReport::new(legit, predicted),
        forgery: AuthReport::new(forged, 0.5f64.powi(sim.forgery_symbols as i32)),
    };

    for r in &sweep.rows {
        println!(
            "{:5.1} dB: P_em {:.3e} (emp {:.3e}), P_et {:.4e} (emp {:.4e}), uniform P_et {:.4}",
            r.snr_db, r.p_em_analytic, r.p_em.rate, r.p_et_analytic, r.p_et.rate, r.uniform_p_et_analytic
        );
    }
    println!(
        "legitimate acceptance {:.5} (predicted {:.5}); forgery acceptance {:.3e} (predicted {:.3e})",
        authentication.legitimate.summary.acceptance.rate,
        authentication.legitimate.predicted_acceptance,
        authentication.forgery.summary.acceptance.rate,
        authentication.forgery.predicted_acceptance
    );

    out.write_json(
        "simulate.json",
        &SimulateReport {
            antennas: sys.antennas,
            noise_variance: sys.noise_variance,
            message_levels: sys.message_levels,
            trials: sim.trials,
            master_seed: sim.seed,
            channel: sweep_cfg.channel,
            reference_snr_db: sim.reference_snr_db,
            target_message_ser: sim.target_message_ser,
            tag_fraction: sweep.tag_fraction,
            uniform_tag_power: sweep.uniform_tag_power,
            rows: sweep.rows,
            goodness_of_fit: fits,
            authentication,
        },
    )?;
    finish(out, "simulate", cfg, started)?;
    Ok(EXIT_OK)
}

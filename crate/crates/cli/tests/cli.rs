use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ncpla::constellation::SystemConfig;
use ncpla::optimize::{evaluate_allocation, BarrierParams};
use serde_json::Value;

fn ncpla(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncpla"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ncpla(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(rows: &[Vec<String>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j].parse().unwrap()).collect()
}

fn assert_schema(schema: &str, instance: &Path) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(schema);
    let schema = read_json(&path);
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    let value = read_json(instance);
    let msgs: Vec<String> = match compiled.validate(&value) {
        Ok(()) => Vec::new(),
        Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    assert!(msgs.is_empty(), "{} fails {}: {msgs:?}", instance.display(), path.display());
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_SIM: &str = "
[simulate]
trials = 100000
snr_db = [6.0, 8.0, 10.0]
fit_draws = 2000
packets = 3000
forgeries = 20000
";

#[test]
fn design_thresholds_interleave() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    ok(&["design", "--out", s(&out), "--tag-ratio", "0.5"]);
    let j = read_json(&out.join("design.json"));
    let e = &j["embedding"];
    let v = |key: &str| -> Vec<f64> {
        e[key].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
    };
    let (a1, a2, bp, c) = (v("a1"), v("a2"), v("b_prime"), v("c"));
    assert_eq!(a1.len(), 4);
    for i in 0..4 {
        assert!(a1[i] < c[i] && c[i] < a2[i]);
        if i < 3 {
            assert!(a2[i] < bp[i] && bp[i] < a1[i + 1]);
        }
    }
    let ln_r = j["constellation"]["ln_ratio"].as_f64().unwrap();
    for k in v("k") {
        assert!((k - 0.5 * ln_r).abs() < 1e-15);
    }
    assert_schema("design.schema.json", &out.join("design.json"));
    assert_schema("manifest.schema.json", &out.join("manifest.json"));
}

#[test]
fn design_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["design", "--out", s(&a)]);
    ok(&["design", "--out", s(&b)]);
    assert_eq!(
        std::fs::read(a.join("design.json")).unwrap(),
        std::fs::read(b.join("design.json")).unwrap()
    );
}

#[test]
fn zero_message_power_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[system]\nmessage_power = 0.0\n");
    let out = ncpla(&["design", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma_m must be positive"));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[optimize]\ngrid_points = \"lots\"\n");
    let out = ncpla(&["optimize", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("optimize.grid_points"));
    let cfg = write_config(dir.path(), "k.toml", "[embedding]\nk = [0.1, 0.2]\n");
    let out = ncpla(&["design", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("embedding.k"));
}

#[test]
fn optimize_one_curve_per_budget_and_larger_budget_is_lower() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[optimize]\ntotal_powers = [15.0, 30.0]\n");
    let out = dir.path().join("o");
    ok(&["optimize", "--config", s(&cfg), "--out", s(&out)]);
    assert_schema("optimize.schema.json", &out.join("optimize.json"));
    let (header, low) = read_csv(&out.join("h_alpha_etot_15.csv"));
    assert_eq!(header, ["alpha", "tag_ser", "message_ser_upper", "feasible"]);
    let (_, high) = read_csv(&out.join("h_alpha_etot_30.csv"));
    assert_eq!(low.len(), 64);
    assert_eq!(high.len(), 64);

    // H at 30 evaluated on the 15 grid never exceeds H at 15
    let sys = SystemConfig {
        total_power: 30.0,
        ..SystemConfig::default()
    };
    for (alpha, h_low) in column(&low, 0).into_iter().zip(column(&low, 1)).step_by(8) {
        let (sample, _) = evaluate_allocation(&sys, alpha, BarrierParams::default()).unwrap();
        assert!(sample.tag_ser <= h_low + 1e-9, "alpha {alpha}: {} > {h_low}", sample.tag_ser);
    }
    let j = read_json(&out.join("optimize.json"));
    let runs = j["runs"].as_array().unwrap();
    assert!(runs[1]["h_star"].as_f64().unwrap() < runs[0]["h_star"].as_f64().unwrap());
}

#[test]
fn vacuous_delta_with_huge_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[system]\ndelta = 1.0\ntotal_power = 1000.0\n");
    let out = dir.path().join("o");
    ok(&["optimize", "--config", s(&cfg), "--out", s(&out)]);
    let j = read_json(&out.join("optimize.json"));
    let run = &j["runs"][0];
    assert!(run["alpha0"].as_f64().unwrap() < 1e-3);
    assert_eq!(run["status"], "optimal");
    assert_eq!(run["solve"]["status"], "optimal");
}

#[test]
fn tiny_budget_reports_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[system]\ntotal_power = 0.5\nmessage_power = 0.5\n",
    );
    let out = dir.path().join("o");
    let res = ncpla(&["optimize", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(3));
    let j = read_json(&out.join("optimize.json"));
    assert_eq!(j["runs"][0]["status"], "infeasible");
    assert!(j["runs"][0]["min_bound"].as_f64().unwrap() > 1e-5);
    assert_schema("optimize.schema.json", &out.join("optimize.json"));
}

#[test]
fn tradeoff_shape_and_consistency_with_optimize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[tradeoff]\ndeltas = [1e-3, 1e-6, 1e-5, 1e-4]\ntotal_powers = [15.0, 25.0]\n",
    );
    let out = dir.path().join("t");
    ok(&["tradeoff", "--config", s(&cfg), "--out", s(&out)]);
    assert_schema("tradeoff.schema.json", &out.join("tradeoff.json"));
    let (header, a) = read_csv(&out.join("tradeoff_etot_15.csv"));
    assert_eq!(header, ["delta", "min_tag_ser", "alpha_star"]);
    let (_, b) = read_csv(&out.join("tradeoff_etot_25.csv"));
    let deltas = column(&a, 0);
    assert!(deltas.windows(2).all(|w| w[0] < w[1]));
    let (ha, hb) = (column(&a, 1), column(&b, 1));
    assert!(ha.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{ha:?}");
    assert!(hb.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{hb:?}");
    assert!(ha.iter().zip(&hb).all(|(x, y)| y <= x));

    // a one-point grid reproduces the optimize result exactly
    let single = write_config(
        dir.path(),
        "one.toml",
        "[system]\ntotal_power = 15.0\n[tradeoff]\ndeltas = [1e-5]\n",
    );
    let t1 = dir.path().join("t1");
    let o1 = dir.path().join("o1");
    ok(&["tradeoff", "--config", s(&single), "--out", s(&t1)]);
    ok(&["optimize", "--config", s(&single), "--out", s(&o1)]);
    let (_, rows) = read_csv(&t1.join("tradeoff_etot_15.csv"));
    assert_eq!(rows.len(), 1);
    let j = read_json(&o1.join("optimize.json"));
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), j["runs"][0]["h_star"].as_f64().unwrap());
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), j["runs"][0]["alpha_star"].as_f64().unwrap());
}

fn same_files(a: &Path, b: &Path, names: &[&str]) {
    for name in names {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert!(x == y, "{name} differs between {} and {}", a.display(), b.display());
    }
}

const SIM_OUTPUTS: [&str; 3] = ["snr_sweep.csv", "goodness_of_fit.csv", "simulate.json"];

#[test]
fn simulate_is_worker_independent_and_replays_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_SIM);
    let (one, three, replay) = (dir.path().join("w1"), dir.path().join("w3"), dir.path().join("r"));
    ok(&["simulate", "--config", s(&cfg), "--out", s(&one), "--workers", "1", "--seed", "11"]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&three), "--workers", "3", "--seed", "11"]);
    same_files(&one, &three, &SIM_OUTPUTS);
    let manifest = three.join("manifest.json");
    ok(&["simulate", "--config", s(&manifest), "--out", s(&replay)]);
    same_files(&one, &replay, &SIM_OUTPUTS);

    assert_schema("simulate.schema.json", &one.join("simulate.json"));
    assert_schema("manifest.schema.json", &manifest);
    let m = read_json(&manifest);
    assert_eq!(m["master_seed"], 11);
    assert_eq!(m["workers"], 3);
    assert_eq!(m["message_snr_db"].as_f64(), Some(10.0));
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for name in SIM_OUTPUTS {
        assert!(outputs.contains(&name));
    }

    let (header, rows) = read_csv(&one.join("snr_sweep.csv"));
    assert_eq!(header.len(), 16);
    assert_eq!(rows.len(), 3);
    let p_et = column(&rows, 6);
    assert!(p_et.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn different_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_SIM);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let res = ok(&["simulate", "--config", s(&cfg), "--out", s(&a), "--seed", "1"]);
    // 10^5 trials is below 30 / 5e-6
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));
    ok(&["simulate", "--config", s(&cfg), "--out", s(&b), "--seed", "2"]);
    assert_ne!(
        std::fs::read(a.join("snr_sweep.csv")).unwrap(),
        std::fs::read(b.join("snr_sweep.csv")).unwrap()
    );
}

#[test]
fn full_vector_mode_passes_fit_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[system]\nantennas = 16\n[simulate]\ntarget_message_ser = 0.05\ntrials = 20000\nsnr_db = [10.0]\nfit_draws = 3000\npackets = 500\nforgeries = 2000\n",
    );
    let out = dir.path().join("fv");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out), "--full-vector"]);
    let j = read_json(&out.join("simulate.json"));
    assert_eq!(j["channel"], "full_vector");
    let (_, rows) = read_csv(&out.join("goodness_of_fit.csv"));
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r[4] == "true"), "{rows:?}");
}

#[test]
fn non_power_of_two_levels_rejected_for_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[system]\nmessage_levels = 3\n");
    let out = ncpla(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn example_config_parses_to_defaults_plus_budgets() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config.example.toml");
    let mut cfg = ncpla_cli::Config::load(&path).unwrap();
    cfg.resolve().unwrap();
    let mut defaults = ncpla_cli::Config::default();
    defaults.optimize.total_powers = vec![15.0, 20.0, 30.0];
    defaults.tradeoff.total_powers = vec![15.0, 20.0, 30.0];
    defaults.resolve().unwrap();
    assert_eq!(cfg, defaults);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_stayers");

const LINEAR_CONFIG: &str = r#"
seed = 11

[input]
n = 10000

[input.dgp]
family = "additive-linear"
theta = 1.0
rho = 0.5
a_sd = 0.5
noise_sd = 0.25

[pipeline]
targets = [{ target = "mean-effect" }, { target = "quantile-effect" }]

[pipeline.basis]
kind = "raw-polynomial"
degree = 1

[pipeline.grid]
points = 21
taus = [0.25, 0.5, 0.75]

[bootstrap]
draws = 25
"#;

fn stayers(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

/// Parses the JSON report on stderr and returns its exit code field.
fn error_code(out: &Output) -> i64 {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().rev().find(|l| l.starts_with('{')).expect("json error report");
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    assert!(v["error"]["message"].is_string());
    v["error"]["exit_code"].as_i64().unwrap()
}

fn read_curve(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["x", "tau", "estimate", "lower", "upper", "flags", "regime"]
    );
    r.records().map(Result::unwrap).collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn simulate_then_fit_mean_recovers_theta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), LINEAR_CONFIG);
    let sim = dir.path().join("sim");
    assert_ok(&stayers(&["simulate", "--config", path_str(&cfg), "--out", path_str(&sim)]));
    let data = sim.join("data.csv");
    assert!(data.exists());

    let fit = dir.path().join("fit");
    assert_ok(&stayers(&["fit-mean", "--config", path_str(&cfg), "--data", path_str(&data), "--out", path_str(&fit)]));
    let rows = read_curve(&fit.join("curves/mean-effect.csv"));
    assert_eq!(rows.len(), 21);
    let inner: Vec<f64> = rows[4..17].iter().map(|r| num(&r[2])).collect();
    let avg = inner.iter().sum::<f64>() / inner.len() as f64;
    assert!((avg - 1.0).abs() < 0.05, "{avg}");
    assert!(rows.iter().all(|r| &r[6] == "time-homogeneity"));
    assert!(fit.join("curves/mean-overid.csv").exists());
    assert!(fit.join("fits.json").exists());

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(fit.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["input"]["source"], "csv");
    let data_digest: String = Sha256::digest(fs::read(&data).unwrap()).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(manifest["input"]["sha256"], data_digest);
}

#[test]
fn manifest_digests_match_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), LINEAR_CONFIG);
    let out = dir.path().join("o");
    assert_ok(&stayers(&["bands", "--config", path_str(&cfg), "--out", path_str(&out)]));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let files = manifest["outputs"].as_object().unwrap();
    for name in ["config.resolved.toml", "bootstrap.json", "bands.json", "curves.json", "fits.json"] {
        assert!(files.contains_key(name), "{name}");
    }
    for (name, digest) in files {
        let bytes = fs::read(out.join(name)).unwrap();
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(digest.as_str().unwrap(), hex, "{name}");
    }
    assert_eq!(manifest["bootstrap_seed"], 11);
    assert_eq!(manifest["command"], "bands");
}

#[test]
fn degenerate_weights_collapse_bands_onto_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{LINEAR_CONFIG}\n[bootstrap.weights]\nlaw = \"degenerate\"\n");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("o");
    assert_ok(&stayers(&["bands", "--config", path_str(&cfg), "--out", path_str(&out), "--boot", "20"]));
    for name in ["mean-effect", "quantile-effect"] {
        for r in read_curve(&out.join(format!("curves/{name}.csv"))) {
            assert_eq!(&r[2], &r[3]);
            assert_eq!(&r[2], &r[4]);
        }
    }
}

#[test]
fn rerun_from_resolved_config_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), LINEAR_CONFIG);
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    assert_ok(&stayers(&["bands", "--config", path_str(&cfg), "--out", path_str(&first), "--seed", "5", "--se", "sd"]));
    let resolved = first.join("config.resolved.toml");
    assert_ok(&stayers(&["bands", "--config", path_str(&resolved), "--out", path_str(&second)]));
    for name in [
        "curves/mean-effect.csv",
        "curves/quantile-effect.csv",
        "curves.json",
        "fits.json",
        "bootstrap.json",
        "bands.json",
        "summary.json",
    ] {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap(), "{name}");
    }
    let text = fs::read_to_string(&resolved).unwrap();
    assert!(text.contains("seed = 5") && text.contains("se = \"sd\""));
}

#[test]
fn every_curve_declares_its_regime() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &LINEAR_CONFIG.replace("n = 10000", "n = 1500"));
    let diff = dir.path().join("diff");
    assert_ok(&stayers(&["diff-effect", "--config", path_str(&cfg), "--out", path_str(&diff)]));
    let mut r = csv::Reader::from_path(diff.join("curves/diff-outcome-difference.csv")).unwrap();
    assert_eq!(r.headers().unwrap().iter().next_back(), Some("x2"));
    assert!(r.records().all(|row| &row.unwrap()[6] == "conditional-independence"));

    let cross = dir.path().join("cross");
    assert_ok(&stayers(&["cross-section", "--config", path_str(&cfg), "--out", path_str(&cross)]));
    assert!(read_curve(&cross.join("curves/cross-section-mean.csv")).iter().all(|row| &row[6] == "cross-section"));

    let json: serde_json::Value = serde_json::from_slice(&fs::read(cross.join("curves.json")).unwrap()).unwrap();
    for c in json.as_array().unwrap() {
        assert_eq!(c["regime"], "cross-section");
        assert!(c["target"].is_string());
    }
}

#[test]
fn time_effects_follow_the_configured_route() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("time_route = \"quantiles\"\n{}", LINEAR_CONFIG.replace("n = 10000", "n = 3000"));
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("o");
    assert_ok(&stayers(&["time-effects", "--config", path_str(&cfg), "--out", path_str(&out)]));
    let sigma = read_curve(&out.join("curves/time-sigma-quantiles.csv"));
    let mid = num(&sigma[sigma.len() / 2][2]);
    assert!((mid - 1.0).abs() < 0.1, "{mid}");

    let none = write_config(dir.path(), &format!("time_route = \"none\"\n{LINEAR_CONFIG}"));
    let out = stayers(&["time-effects", "--config", path_str(&none), "--out", path_str(&dir.path().join("n"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_code(&out), 2);
}

#[test]
fn exit_codes_separate_config_data_and_numerical_failures() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "seed = \"x\"\n");
    let out = stayers(&["effects", "--config", path_str(&bad)]);
    assert_eq!((out.status.code(), error_code(&out)), (Some(2), 2));

    let out = stayers(&["fit-mean", "--alpha", "1.5", "--data", "unused.csv"]);
    assert_eq!(out.status.code(), Some(2));

    let out = stayers(&["fit-mean", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));

    let missing = dir.path().join("missing.csv");
    let out = stayers(&["fit-mean", "--data", path_str(&missing), "--out", path_str(&dir.path().join("m"))]);
    assert_eq!((out.status.code(), error_code(&out)), (Some(3), 3));
    assert!(!dir.path().join("m").exists());

    let constant = dir.path().join("constant.csv");
    fs::write(&constant, "id,t,y,x\n1,1,0,1\n1,2,1,1\n2,1,0,1\n2,2,1,1\n3,1,5,1\n3,2,2,1\n").unwrap();
    let out = stayers(&["fit-mean", "--data", path_str(&constant), "--out", path_str(&dir.path().join("c"))]);
    assert_eq!((out.status.code(), error_code(&out)), (Some(3), 3));

    // Squared residuals of outcomes near 1e200 overflow the variance fit.
    let mut text = String::from("id,t,y,x\n");
    for i in 0..100 {
        let x = (i as f64 * 0.37).sin();
        text.push_str(&format!("{i},1,{:e},{x}\n{i},2,{:e},{}\n", 1e200 * (i as f64).cos(), -1e200 * (i as f64).sin(), x + 0.1 * (i % 3) as f64));
    }
    let huge = dir.path().join("huge.csv");
    fs::write(&huge, text).unwrap();
    let out = stayers(&["time-effects", "--data", path_str(&huge), "--out", path_str(&dir.path().join("h"))]);
    assert_eq!((out.status.code(), error_code(&out)), (Some(4), 4));
}

#[test]
fn summarize_reports_the_stayer_atom() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), LINEAR_CONFIG);
    let out = dir.path().join("s");
    assert_ok(&stayers(&["summarize", "--config", path_str(&cfg), "--out", path_str(&out)]));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    let zeros = v["report"]["delta_x_histogram"]["zero_count"].as_u64().unwrap() as f64;
    assert!((zeros / 10_000.0 - 0.15).abs() < 0.02);
}

#[test]
fn mc_with_one_replication_gives_a_degenerate_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &LINEAR_CONFIG.replace("n = 10000", "n = 500"));
    let out = dir.path().join("mc");
    let run = stayers(&["mc", "--config", path_str(&cfg), "-R", "1", "--boot", "0", "--out", path_str(&out)]);
    assert_ok(&run);
    assert!(String::from_utf8_lossy(&run.stderr).contains("warning"));
    let mut r = csv::Reader::from_path(out.join("mc.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert_eq!(&row[1], "1");
        assert_eq!(&row[4], "", "sd needs two replications");
        assert_eq!(&row[6], "", "no bands without draws");
        assert_eq!(&row[8], "true");
    }
}

#[test]
fn mc_on_a_noiseless_design_has_no_bias() {
    let dir = tempfile::tempdir().unwrap();
    let text = LINEAR_CONFIG
        .replace("n = 10000", "n = 400")
        .replace("a_sd = 0.5", "a_sd = 0.0")
        .replace("noise_sd = 0.25", "noise_sd = 0.0");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("mc");
    assert_ok(&stayers(&["mc", "--config", path_str(&cfg), "-R", "3", "--boot", "0", "--out", path_str(&out)]));
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&fs::read(out.join("mc.json")).unwrap()).unwrap();
    for row in rows {
        assert!(row["bias"].as_f64().unwrap().abs() < 1e-6, "{row}");
        assert!(row["sd"].as_f64().unwrap() < 1e-6, "{row}");
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fdd-recon"));
    c.env("RUST_LOG", "warn").env_remove("FDD_RECON_THREADS");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn csv_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

const CRB: &str = r#"{
    "experiment": "crb",
    "system": {"antennas": 8, "subcarriers": 32},
    "paths": 3,
    "snr_db": [10, 20],
    "trials": 4,
    "seed": 7
}"#;

#[test]
fn crb_run_writes_hashed_outputs_and_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "case.json", CRB);
    let out = tmp.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("case.json")).unwrap()).unwrap();
    let hash = report["config_sha256"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    assert_eq!(report["seed"], 7);
    assert_eq!(report["config"]["paths"], 3);
    assert!(report["git_describe"].as_str().is_some_and(|s| !s.is_empty()));
    assert_eq!(report["files"], serde_json::json!(["case_crb.csv"]));

    let lines = csv_lines(&out.join("case_crb.csv"));
    assert_eq!(lines[0], format!("# config_sha256={hash}"));
    assert_eq!(lines[1], "snr_db,eps_mu_db,eps_nu_db,bound_mu_db,bound_nu_db");
    assert_eq!(lines.len(), 4);

    // CSV values are the report values in dB at full precision
    for (k, line) in lines[2..].iter().enumerate() {
        let fields: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let point = &report["result"]["points"][k];
        let eps_mu = point["eps_mu"].as_f64().unwrap();
        assert_eq!(fields[1], (10.0 * eps_mu.log10()).max(-120.0));
        assert_eq!(fields[3], 10.0 * point["bound_mu"].as_f64().unwrap().log10());
    }

    let v = bin().arg("verify").arg(out.join("case.json")).output().unwrap();
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stderr));
}

#[test]
fn identical_config_and_seed_give_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "case.json", CRB);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&cfg, &a, &[]).status.success());
    let o = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&b)
        .env("FDD_RECON_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(fs::read(a.join("case_crb.csv")).unwrap(), fs::read(b.join("case_crb.csv")).unwrap());
}

#[test]
fn overrides_change_the_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "case.json", CRB);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&cfg, &a, &[]).status.success());
    assert!(run(&cfg, &b, &["--seed", "8", "--trials", "2", "--threads", "2"]).status.success());
    let ra: Value = serde_json::from_str(&fs::read_to_string(a.join("case.json")).unwrap()).unwrap();
    let rb: Value = serde_json::from_str(&fs::read_to_string(b.join("case.json")).unwrap()).unwrap();
    assert_eq!(rb["config"]["seed"], 8);
    assert_eq!(rb["trials"], 2);
    assert_ne!(ra["config_sha256"], rb["config_sha256"]);
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "bad.json", "{ \"experiment\": \"crb\", ");
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let cfg = write_config(tmp.path(), "typo.json", &CRB.replace("\"paths\"", "\"pahts\""));
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pahts"));
    assert!(!out.exists());

    let o = run(&tmp.path().join("missing.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_3_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    // more well-separated paths than the plane can hold
    let cfg = write_config(tmp.path(), "crowded.json", &CRB.replace("\"paths\": 3", "\"paths\": 40"));
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn verify_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "case.json", CRB);
    let out = tmp.path().join("out");
    assert!(run(&cfg, &out, &[]).status.success());

    let csv = out.join("case_crb.csv");
    let original = fs::read_to_string(&csv).unwrap();
    fs::write(&csv, original.replacen("config_sha256=", "config_sha256=0", 1)).unwrap();
    let v = bin().arg("verify").arg(out.join("case.json")).output().unwrap();
    assert_eq!(v.status.code(), Some(1));
    fs::write(&csv, &original).unwrap();

    let report_path = out.join("case.json");
    let text = fs::read_to_string(&report_path).unwrap();
    let mut report: Value = serde_json::from_str(&text).unwrap();
    report["config"]["seed"] = Value::from(99);
    fs::write(&report_path, serde_json::to_string_pretty(&report).unwrap()).unwrap();
    let v = bin().arg("verify").arg(&report_path).output().unwrap();
    assert_eq!(v.status.code(), Some(1));
}

#[test]
fn reconstruction_run_writes_curves_and_cdfs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "recon.json",
        r#"{
            "experiment": "reconstruction",
            "system": {"antennas": 4, "subcarriers": 64},
            "scenario": {"kind": "sparse-two-path"},
            "nomp": {"stopping": {"rule": "false-alarm", "p_fa": 0.01}},
            "snr_db": [0, 10],
            "trials": 6,
            "seed": 3,
            "output": {"format": "csv"}
        }"#,
    );
    let out = tmp.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mse = csv_lines(&out.join("recon_mse.csv"));
    assert_eq!(mse[1], "snr_db,estimator,mse_db,trials,flagged");
    assert_eq!(mse.len(), 2 + 2 * 5);
    for name in ["ls", "lmmse", "uplink-reconstruction", "downlink-reconstruction", "downlink-inference"] {
        assert_eq!(mse.iter().filter(|l| l.split(',').nth(1) == Some(name)).count(), 2);
    }
    let cdf = csv_lines(&out.join("recon_cdf.csv"));
    assert_eq!(cdf[1], "snr_db,estimator,mse_db,probability");
    let last_ls: Vec<&String> = cdf.iter().filter(|l| l.starts_with("10,ls,")).collect();
    assert!(last_ls.last().unwrap().ends_with(",1"));
    assert!(bin().arg("verify").arg(out.join("recon.json")).status().unwrap().success());
}

#[test]
fn calibration_experiments_run() {
    let tmp = tempfile::tempdir().unwrap();
    let fa = write_config(
        tmp.path(),
        "fa.json",
        r#"{"experiment": "false-alarm", "system": {"antennas": 4, "subcarriers": 16}, "p_fa": [0.05], "trials": 50, "seed": 1}"#,
    );
    let pe = write_config(
        tmp.path(),
        "pe.json",
        r#"{"experiment": "phase-error", "system": {"antennas": 4, "subcarriers": 64}, "snr_db": [10], "offset_range": [0.1, 0.5], "trials": 20, "seed": 1}"#,
    );
    let out = tmp.path().join("out");
    assert!(run(&fa, &out, &[]).status.success());
    assert!(run(&pe, &out, &[]).status.success());
    assert_eq!(csv_lines(&out.join("fa_false_alarm.csv"))[1], "p_fa,threshold,false_alarms,trials,rate");
    let phase = csv_lines(&out.join("pe_phase.csv"));
    assert_eq!(phase[1], "trial,offset,phase_deviation,refined_mse_db,inferred_mse_db");
    assert_eq!(phase.len(), 2 + 20);
    assert!(out.join("pe_cdf.csv").exists());
}

#[test]
fn keys_outside_the_experiment_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "fa.json",
        r#"{"experiment": "false-alarm", "system": {"antennas": 4, "subcarriers": 16}, "offset_range": [0.1, 0.2], "trials": 5, "seed": 1}"#,
    );
    let o = run(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("offset_range"));
}

#[test]
fn shipped_configs_run() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = tempfile::tempdir().unwrap();
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let o = run(&path, tmp.path(), &["--trials", "2"]);
            assert!(o.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

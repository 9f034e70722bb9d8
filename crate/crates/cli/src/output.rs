//! Report and CSV rendering, atomic writes, and hash verification.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use fdd_recon::harness::{
    db, empirical_cdf, CrbExperimentReport, FalseAlarmReport, PhaseErrorReport, ReconstructionReport,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

/// First line of every CSV file; the hash follows the `=`.
pub const HASH_PREFIX: &str = "# config_sha256=";

pub const GIT_DESCRIBE: &str = env!("FDD_RECON_GIT_DESCRIBE");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub git_describe: String,
    pub config_sha256: String,
    pub config: RunConfig,
    pub seed: u64,
    pub trials: usize,
    pub wall_clock_secs: f64,
    /// CSV files written next to this report.
    pub files: Vec<String>,
    /// Harness output in linear units.
    pub result: serde_json::Value,
}

pub enum Outcome {
    Crb(CrbExperimentReport),
    Reconstruction(ReconstructionReport),
    FalseAlarm(FalseAlarmReport),
    PhaseError(PhaseErrorReport),
}

impl Outcome {
    pub fn wall_clock_secs(&self) -> f64 {
        match self {
            Outcome::Crb(r) => r.wall_clock_secs,
            Outcome::Reconstruction(r) => r.wall_clock_secs,
            Outcome::FalseAlarm(r) => r.wall_clock_secs,
            Outcome::PhaseError(r) => r.wall_clock_secs,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let v = match self {
            Outcome::Crb(r) => serde_json::to_value(r),
            Outcome::Reconstruction(r) => serde_json::to_value(r),
            Outcome::FalseAlarm(r) => serde_json::to_value(r),
            Outcome::PhaseError(r) => serde_json::to_value(r),
        };
        v.expect("reports are always serializable")
    }
}

/// Shortest representation that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x}")
}

struct Table {
    name: String,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: String, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn render(&self, hash: &str) -> Result<Vec<u8>, CliError> {
        let mut buf = format!("{HASH_PREFIX}{hash}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.header).map_err(runtime)?;
            for r in &self.rows {
                w.write_record(r).map_err(runtime)?;
            }
            w.flush().map_err(runtime)?;
        }
        Ok(buf)
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn cdf_rows(table: &mut Table, prefix: &[String], samples: &[f64]) {
    let db_samples: Vec<f64> = samples.iter().map(|&x| db(x)).collect();
    for p in empirical_cdf(&db_samples) {
        let mut row = prefix.to_vec();
        row.push(num(p.value));
        row.push(num(p.probability));
        table.rows.push(row);
    }
}

fn tables(stem: &str, outcome: &Outcome) -> Vec<Table> {
    match outcome {
        Outcome::Crb(r) => {
            let mut t = Table::new(
                format!("{stem}_crb.csv"),
                &["snr_db", "eps_mu_db", "eps_nu_db", "bound_mu_db", "bound_nu_db"],
            );
            for p in &r.points {
                t.rows.push(vec![
                    num(p.snr_db),
                    num(db(p.eps_mu)),
                    num(db(p.eps_nu)),
                    num(db(p.bound_mu)),
                    num(db(p.bound_nu)),
                ]);
            }
            vec![t]
        }
        Outcome::Reconstruction(r) => {
            let mut mse = Table::new(
                format!("{stem}_mse.csv"),
                &["snr_db", "estimator", "mse_db", "trials", "flagged"],
            );
            let mut cdf = Table::new(format!("{stem}_cdf.csv"), &["snr_db", "estimator", "mse_db", "probability"]);
            for p in &r.points {
                for c in &p.curves {
                    mse.rows.push(vec![
                        num(p.snr_db),
                        c.curve.name().to_string(),
                        num(db(c.mean_mse)),
                        c.per_trial.len().to_string(),
                        c.flagged.to_string(),
                    ]);
                    cdf_rows(&mut cdf, &[num(p.snr_db), c.curve.name().to_string()], &c.per_trial);
                }
            }
            vec![mse, cdf]
        }
        Outcome::FalseAlarm(r) => {
            let mut t = Table::new(
                format!("{stem}_false_alarm.csv"),
                &["p_fa", "threshold", "false_alarms", "trials", "rate"],
            );
            for p in &r.points {
                t.rows.push(vec![
                    num(p.p_fa),
                    num(p.threshold),
                    p.false_alarms.to_string(),
                    r.trials.to_string(),
                    num(p.rate),
                ]);
            }
            vec![t]
        }
        Outcome::PhaseError(r) => {
            let mut t = Table::new(
                format!("{stem}_phase.csv"),
                &["trial", "offset", "phase_deviation", "refined_mse_db", "inferred_mse_db"],
            );
            for (k, tr) in r.trials.iter().enumerate() {
                t.rows.push(vec![
                    k.to_string(),
                    num(tr.offset),
                    num(tr.phase_deviation),
                    num(db(tr.refined_mse)),
                    num(db(tr.inferred_mse)),
                ]);
            }
            let mut cdf = Table::new(format!("{stem}_cdf.csv"), &["estimator", "mse_db", "probability"]);
            let refined: Vec<f64> = r.trials.iter().map(|t| t.refined_mse).collect();
            let inferred: Vec<f64> = r.trials.iter().map(|t| t.inferred_mse).collect();
            cdf_rows(&mut cdf, &["refined".to_string()], &refined);
            cdf_rows(&mut cdf, &["inferred".to_string()], &inferred);
            vec![t, cdf]
        }
    }
}

/// Write every file to a temporary name first and rename only once all of
/// them are complete.
fn write_all_atomic(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(runtime)?;
        tmp.write_all(bytes).map_err(runtime)?;
        tmp.as_file().sync_all().map_err(runtime)?;
        staged.push((tmp, dir.join(name)));
    }
    let mut done: Vec<PathBuf> = Vec::with_capacity(staged.len());
    for (tmp, dest) in staged {
        if let Err(e) = tmp.persist(&dest) {
            for p in &done {
                let _ = fs::remove_file(p);
            }
            return Err(runtime(format!("cannot write {}: {}", dest.display(), e.error)));
        }
        done.push(dest);
    }
    Ok(done)
}

/// Render and write the report and CSV files; returns the written paths.
pub fn write_outputs(dir: &Path, stem: &str, config: &RunConfig, outcome: &Outcome) -> Result<Vec<PathBuf>, CliError> {
    let hash = config.sha256();
    let tables = tables(stem, outcome);
    let mut files = Vec::with_capacity(tables.len() + 1);
    for t in &tables {
        files.push((t.name.clone(), t.render(&hash)?));
    }
    let report = RunReport {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        git_describe: GIT_DESCRIBE.to_string(),
        config_sha256: hash,
        config: config.clone(),
        seed: config.seed,
        trials: config.trials,
        wall_clock_secs: outcome.wall_clock_secs(),
        files: tables.iter().map(|t| t.name.clone()).collect(),
        result: outcome.to_json(),
    };
    let mut json = serde_json::to_vec_pretty(&report).map_err(runtime)?;
    json.push(b'\n');
    files.push((format!("{stem}.json"), json));
    write_all_atomic(dir, &files)
}

fn read_hash_line(path: &Path) -> Result<String, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::Mismatch(format!("{}: {e}", path.display())))?;
    let mut line = String::new();
    BufReader::new(f)
        .read_line(&mut line)
        .map_err(|e| CliError::Mismatch(format!("{}: {e}", path.display())))?;
    line.trim_end()
        .strip_prefix(HASH_PREFIX)
        .map(str::to_string)
        .ok_or_else(|| CliError::Mismatch(format!("{}: no config hash line", path.display())))
}

/// Recompute the config hash of a report and check it against the report
/// and every file it lists. Returns the number of files checked.
pub fn verify(report_path: &Path) -> Result<usize, CliError> {
    let text = fs::read_to_string(report_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", report_path.display())))?;
    let report: RunReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{} is not a run report: {e}", report_path.display())))?;
    let hash = report.config.sha256();
    if hash != report.config_sha256 {
        return Err(CliError::Mismatch(format!(
            "config hash {hash} does not match recorded {}",
            report.config_sha256
        )));
    }
    let dir = report_path.parent().unwrap_or_else(|| Path::new("."));
    for name in &report.files {
        let path = dir.join(name);
        let found = read_hash_line(&path)?;
        if found != hash {
            return Err(CliError::Mismatch(format!(
                "{} carries hash {found}, expected {hash}",
                path.display()
            )));
        }
    }
    Ok(report.files.len())
}

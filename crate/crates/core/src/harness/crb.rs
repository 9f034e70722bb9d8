use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{add_noise, db_to_linear, generate_normalized, match_paths, trial_rng, Scenario};
use crate::bounds::crb;
use crate::model::synthesize_normalized;
use crate::nomp::{nomp_extract, NompConfig, StoppingRule};
use crate::{Error, NormalizedPath, Result, SystemConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbExperimentConfig {
    pub system: SystemConfig,
    pub nomp: NompConfig,
    /// Number of equal-power paths per trial.
    pub paths: usize,
    /// Per-path SNR points in dB; `+inf` runs noiseless.
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl CrbExperimentConfig {
    /// 15 unit-power paths, `gamma = (2, 2)`, false-alarm stopping at 1 %.
    pub fn new(system: SystemConfig, snr_db: Vec<f64>, trials: usize, seed: u64) -> Self {
        Self {
            system,
            nomp: NompConfig::default()
                .with_oversampling(2, 2)
                .with_stopping(StoppingRule::FalseAlarm { p_fa: 0.01 }),
            paths: 15,
            snr_db,
            trials,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbPoint {
    pub snr_db: f64,
    /// Measured `N^2 E|mu_hat - mu|^2` over matched paths.
    pub eps_mu: f64,
    /// Measured `M^2 E|nu_hat - nu|^2` over matched paths.
    pub eps_nu: f64,
    pub bound_mu: f64,
    pub bound_nu: f64,
    pub matched: usize,
    pub missed: usize,
    pub false_alarms: usize,
    pub missed_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbExperimentReport {
    pub points: Vec<CrbPoint>,
    pub trials: usize,
    pub seed: u64,
    pub wall_clock_secs: f64,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    sq_mu: f64,
    sq_nu: f64,
    matched: usize,
    missed: usize,
    false_alarms: usize,
}

fn scale(paths: &[NormalizedPath], amplitude: f64) -> Vec<NormalizedPath> {
    paths
        .iter()
        .map(|p| NormalizedPath {
            gain: p.gain * amplitude,
            ..*p
        })
        .collect()
}

fn run_trial(cfg: &CrbExperimentConfig, trial: usize) -> Result<Vec<Tally>> {
    let sys = &cfg.system;
    let (n, m) = (sys.subcarriers as f64, sys.antennas as f64);
    let scenario = Scenario::equal_power_grid(cfg.paths);
    cfg.snr_db
        .iter()
        .map(|&snr_db| {
            let mut rng = trial_rng(cfg.seed, trial as u64);
            let unit = generate_normalized(sys, &scenario, &mut rng)?;
            let noiseless = snr_db == f64::INFINITY;
            let truth = if noiseless { unit } else { scale(&unit, db_to_linear(snr_db).sqrt()) };
            let mut y = synthesize_normalized(sys, &truth);
            if !noiseless {
                add_noise(&mut y, 1.0, &mut rng);
            }
            let est = nomp_extract(sys, &y, &cfg.nomp)?;
            let matching = match_paths(sys, &truth, &est.paths);
            let mut t = Tally {
                missed: matching.missed,
                false_alarms: matching.false_alarms,
                matched: matching.pairs.len(),
                ..Tally::default()
            };
            for (_, _, dmu, dnu) in matching.pairs {
                t.sq_mu += n * n * dmu * dmu;
                t.sq_nu += m * m * dnu * dnu;
            }
            Ok(t)
        })
        .collect()
}

/// Measured normalized MSEs of delay and angle against the single-path
/// bounds, with equal-power paths at the given SNRs.
pub fn run_crb_experiment(cfg: &CrbExperimentConfig) -> Result<CrbExperimentReport> {
    cfg.system.validate()?;
    cfg.nomp.validate()?;
    if cfg.trials == 0 || cfg.snr_db.is_empty() {
        return Err(Error::InvalidConfig("need at least one trial and one SNR point".into()));
    }
    let start = Instant::now();
    let per_trial: Vec<Vec<Tally>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t))
        .collect::<Result<_>>()?;

    let sys = &cfg.system;
    let points = cfg
        .snr_db
        .iter()
        .enumerate()
        .map(|(k, &snr_db)| {
            let mut acc = Tally::default();
            for t in &per_trial {
                let x = t[k];
                acc.sq_mu += x.sq_mu;
                acc.sq_nu += x.sq_nu;
                acc.matched += x.matched;
                acc.missed += x.missed;
                acc.false_alarms += x.false_alarms;
            }
            let (bound_mu, bound_nu) = if snr_db.is_finite() {
                let b = crb(sys.antennas, sys.subcarriers, db_to_linear(snr_db))?;
                (b.eps_mu_bound, b.eps_nu_bound)
            } else {
                (0.0, 0.0)
            };
            let matched = acc.matched.max(1) as f64;
            Ok(CrbPoint {
                snr_db,
                eps_mu: acc.sq_mu / matched,
                eps_nu: acc.sq_nu / matched,
                bound_mu,
                bound_nu,
                matched: acc.matched,
                missed: acc.missed,
                false_alarms: acc.false_alarms,
                missed_rate: acc.missed as f64 / (cfg.trials * cfg.paths) as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CrbExperimentReport {
        points,
        trials: cfg.trials,
        seed: cfg.seed,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{add_noise, db_to_linear, mse_metric, trial_rng, DELAY_SPREAD};
use crate::downlink::{
    build_coefficient_matrix, infer_downlink, reconstruct_downlink, refine_gains, simulate_downlink_pilots,
    BeamformingType, PilotPattern,
};
use crate::model::{synthesize_downlink_normalized, wrapped_offset};
use crate::nomp::{nomp_extract, NompConfig, StoppingRule};
use crate::{ChannelVector, Error, NormalizedPath, Result, SystemConfig, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseAlarmConfig {
    pub system: SystemConfig,
    /// Grid settings; the stopping rule is replaced per `p_fa` point.
    pub nomp: NompConfig,
    pub p_fa: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseAlarmPoint {
    pub p_fa: f64,
    pub threshold: f64,
    pub false_alarms: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseAlarmReport {
    pub points: Vec<FalseAlarmPoint>,
    pub trials: usize,
    pub seed: u64,
    pub wall_clock_secs: f64,
}

/// Feed pure unit-variance noise to the pursuit and count trials in which it
/// reports at least one path.
pub fn run_false_alarm_experiment(cfg: &FalseAlarmConfig) -> Result<FalseAlarmReport> {
    cfg.system.validate()?;
    cfg.nomp.validate()?;
    if cfg.trials == 0 || cfg.p_fa.is_empty() {
        return Err(Error::InvalidConfig("need at least one trial and one p_fa point".into()));
    }
    let rules: Vec<NompConfig> = cfg
        .p_fa
        .iter()
        .map(|&p_fa| {
            let n = NompConfig {
                max_paths: Some(1),
                ..cfg.nomp.with_stopping(StoppingRule::FalseAlarm { p_fa })
            };
            n.validate().map(|_| n)
        })
        .collect::<Result<_>>()?;

    let start = Instant::now();
    let sys = &cfg.system;
    let hits: Vec<Vec<bool>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(cfg.seed, t as u64);
            let mut y = ChannelVector::zeros(sys);
            add_noise(&mut y, 1.0, &mut rng);
            rules
                .iter()
                .map(|n| nomp_extract(sys, &y, n).map(|r| !r.paths.is_empty()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let points = cfg
        .p_fa
        .iter()
        .enumerate()
        .map(|(k, &p_fa)| {
            let false_alarms = hits.iter().filter(|h| h[k]).count();
            FalseAlarmPoint {
                p_fa,
                threshold: crate::nomp::false_alarm_threshold(sys.len(), p_fa),
                false_alarms,
                rate: false_alarms as f64 / cfg.trials as f64,
            }
        })
        .collect();

    Ok(FalseAlarmReport {
        points,
        trials: cfg.trials,
        seed: cfg.seed,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseErrorConfig {
    pub system: SystemConfig,
    pub beamforming: BeamformingType,
    /// Path SNR in dB.
    pub snr_db: f64,
    /// Range of the injected `dF * d_tau`.
    pub min_offset: f64,
    pub max_offset: f64,
    pub downlink_noise_variance: f64,
    pub trials: usize,
    pub seed: u64,
}

impl PhaseErrorConfig {
    pub fn new(system: SystemConfig, trials: usize, seed: u64) -> Self {
        Self {
            system,
            beamforming: BeamformingType::Type1,
            snr_db: 10.0,
            min_offset: 0.1,
            max_offset: 0.5,
            downlink_noise_variance: 1.0,
            trials,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseErrorTrial {
    /// Injected `dF * d_tau`.
    pub offset: f64,
    /// `arg(inferred / true)` at the reference antenna and DC subcarrier
    /// minus `2 pi dF d_tau`, wrapped into `[-pi, pi)`.
    pub phase_deviation: f64,
    pub refined_mse: f64,
    pub inferred_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseErrorReport {
    pub trials: Vec<PhaseErrorTrial>,
    pub max_phase_deviation: f64,
    /// Fraction of trials where refinement beats direct inference.
    pub refined_win_rate: f64,
    pub median_refined_mse: f64,
    pub median_inferred_mse: f64,
    pub seed: u64,
    pub wall_clock_secs: f64,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn phase_trial(cfg: &PhaseErrorConfig, pattern: &PilotPattern, trial: usize) -> Result<PhaseErrorTrial> {
    let sys = &cfg.system;
    let mut rng = trial_rng(cfg.seed, trial as u64);
    let amp = db_to_linear(cfg.snr_db).sqrt();
    let gain = C64::from_polar(amp, rng.random_range(0.0..2.0 * PI));
    let mu = rng.random_range(0.0..DELAY_SPREAD);
    let nu = sys.d_over_lambda * rng.random_range(0.0..2.0 * PI).sin();
    let offset = rng.random_range(cfg.min_offset..=cfg.max_offset);
    let truth = [NormalizedPath::new(gain, mu, nu)];
    // d_tau = offset / dF, i.e. d_mu = df * offset / dF
    let est = [NormalizedPath::new(
        gain,
        mu + sys.subcarrier_spacing * offset / sys.carrier_offset,
        nu,
    )];

    let h_dl = synthesize_downlink_normalized(sys, &truth);
    let inferred = infer_downlink(sys, &est);
    let reference = sys.flat_index(0, 0);
    let ratio = inferred[reference] / h_dl[reference];
    let phase_deviation = 2.0 * PI * wrapped_offset(ratio.arg() / (2.0 * PI), offset);

    let y = simulate_downlink_pilots(sys, &truth, &est, cfg.beamforming, pattern, cfg.downlink_noise_variance, &mut rng);
    let a = build_coefficient_matrix(sys, pattern, &est, cfg.beamforming)?;
    let g = refine_gains(&a, &y)?;
    let refined = reconstruct_downlink(sys, &g, &est)?;

    Ok(PhaseErrorTrial {
        offset,
        phase_deviation,
        refined_mse: mse_metric(&refined, &h_dl)?,
        inferred_mse: mse_metric(&inferred, &h_dl)?,
    })
}

/// Single-path delay-error experiment: phase law of direct inference and
/// refinement against it.
pub fn run_phase_error_experiment(cfg: &PhaseErrorConfig) -> Result<PhaseErrorReport> {
    cfg.system.validate()?;
    if cfg.trials == 0 || !(cfg.min_offset <= cfg.max_offset) || cfg.system.carrier_offset == 0.0 {
        return Err(Error::InvalidConfig(
            "need trials >= 1, min_offset <= max_offset and a non-zero carrier offset".into(),
        ));
    }
    let start = Instant::now();
    let pattern = PilotPattern::new(&cfg.system, cfg.system.pilot_stride)?;
    let trials: Vec<PhaseErrorTrial> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| phase_trial(cfg, &pattern, t))
        .collect::<Result<_>>()?;
    let wins = trials.iter().filter(|t| t.refined_mse < t.inferred_mse).count();
    let refined: Vec<f64> = trials.iter().map(|t| t.refined_mse).collect();
    let inferred: Vec<f64> = trials.iter().map(|t| t.inferred_mse).collect();
    Ok(PhaseErrorReport {
        max_phase_deviation: trials.iter().map(|t| t.phase_deviation.abs()).fold(0.0, f64::max),
        refined_win_rate: wins as f64 / trials.len() as f64,
        median_refined_mse: median(&refined),
        median_inferred_mse: median(&inferred),
        trials,
        seed: cfg.seed,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{add_noise, add_noise_slice, db_to_linear, generate_normalized, mse_metric, trial_rng, Scenario, DELAY_SPREAD};
use crate::baselines::{ls_estimate, sample_pilots, GenieCovariance, LmmseFilter};
use crate::downlink::{
    build_coefficient_matrix, infer_downlink, reconstruct_downlink, refine_gains, simulate_downlink_pilots,
    BeamformingType, PilotPattern,
};
use crate::model::{cis, synthesize_downlink_normalized, synthesize_normalized};
use crate::nomp::{nomp_extract, NompConfig, StoppingRule};
use crate::{ChannelVector, Error, NormalizedPath, Result, SystemConfig, C64};

/// Quadrature points for the angular characteristic function.
const ANGLE_QUADRATURE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Curve {
    /// Downlink LS with linear interpolation.
    Ls,
    /// Downlink genie LMMSE.
    Lmmse,
    /// Uplink channel rebuilt from the pursuit output.
    UplinkReconstruction,
    /// Downlink channel rebuilt with refined gains.
    DownlinkReconstruction,
    /// Downlink channel rebuilt with the uplink gains reused.
    DownlinkInference,
}

impl Curve {
    pub const ALL: [Curve; 5] = [
        Curve::Ls,
        Curve::Lmmse,
        Curve::UplinkReconstruction,
        Curve::DownlinkReconstruction,
        Curve::DownlinkInference,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Curve::Ls => "ls",
            Curve::Lmmse => "lmmse",
            Curve::UplinkReconstruction => "uplink-reconstruction",
            Curve::DownlinkReconstruction => "downlink-reconstruction",
            Curve::DownlinkInference => "downlink-inference",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    /// Geometry; `pilot_stride` is the beamformed downlink pilot stride.
    pub system: SystemConfig,
    pub scenario: Scenario,
    pub nomp: NompConfig,
    pub beamforming: BeamformingType,
    /// Comb stride of the LS/LMMSE downlink pilots.
    pub baseline_stride: usize,
    pub downlink_noise_variance: f64,
    /// Total-power SNR points in dB.
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl ReconstructionConfig {
    pub fn new(system: SystemConfig, scenario: Scenario, snr_db: Vec<f64>, trials: usize, seed: u64) -> Self {
        Self {
            system,
            scenario,
            nomp: NompConfig::default().with_stopping(StoppingRule::FalseAlarm { p_fa: 0.01 }),
            beamforming: BeamformingType::Type1,
            baseline_stride: 4,
            downlink_noise_variance: 1.0,
            snr_db,
            trials,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.nomp.validate()?;
        self.scenario.validate()?;
        if self.baseline_stride == 0 {
            return Err(Error::InvalidConfig("baseline_stride must be >= 1".into()));
        }
        if !(self.downlink_noise_variance >= 0.0) {
            return Err(Error::InvalidConfig("downlink_noise_variance must be >= 0".into()));
        }
        if self.trials == 0 || self.snr_db.is_empty() {
            return Err(Error::InvalidConfig("need at least one trial and one SNR point".into()));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig("SNR points must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveStats {
    pub curve: Curve,
    /// Mean linear MSE over unflagged trials.
    pub mean_mse: f64,
    /// Linear MSE of every unflagged trial, in trial order.
    pub per_trial: Vec<f64>,
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionPoint {
    pub snr_db: f64,
    pub curves: Vec<CurveStats>,
    pub mean_detected_paths: f64,
}

impl ReconstructionPoint {
    pub fn curve(&self, curve: Curve) -> &CurveStats {
        self.curves.iter().find(|c| c.curve == curve).expect("every curve is reported")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub points: Vec<ReconstructionPoint>,
    pub trials: usize,
    pub seed: u64,
    pub wall_clock_secs: f64,
}

/// `E exp(j 2 pi k mu)` for `mu ~ U[0, width)`.
fn uniform_delay_cf(k: i64, width: f64) -> C64 {
    if k == 0 || width == 0.0 {
        return C64::new(1.0, 0.0);
    }
    let x = 2.0 * PI * k as f64 * width;
    (cis(x) - 1.0) / C64::new(0.0, x)
}

/// `E exp(j 2 pi k (d/lambda) sin(theta))` for `theta` uniform on the circle,
/// i.e. `J0(2 pi k d / lambda)`.
fn circular_angle_cf(k: i64, d_over_lambda: f64) -> C64 {
    let x = 2.0 * PI * k as f64 * d_over_lambda;
    let q = ANGLE_QUADRATURE.max(4 * x.abs().ceil() as usize + 64);
    let s: f64 = (0..q).map(|i| (x * (2.0 * PI * i as f64 / q as f64).sin()).cos()).sum();
    C64::new(s / q as f64, 0.0)
}

/// Ensemble covariance of the scenario at total (or, for equal-power grids,
/// per-path) power `power`.
pub fn genie_covariance(cfg: &SystemConfig, scenario: &Scenario, power: f64) -> GenieCovariance {
    let (n, m) = (cfg.subcarriers, cfg.antennas);
    let p = C64::new(power, 0.0);
    let kron = |freq: nalgebra::DMatrix<C64>, space| GenieCovariance::Kronecker { freq: freq * p, space };
    let circular = |len| GenieCovariance::toeplitz(len, |k| circular_angle_cf(k, cfg.d_over_lambda));
    match scenario {
        Scenario::SparseTwoPath => kron(
            GenieCovariance::toeplitz(n, |k| uniform_delay_cf(k, DELAY_SPREAD)),
            circular(m),
        ),
        Scenario::Cluster { .. } => {
            let window = 3.0 / n as f64;
            kron(
                GenieCovariance::toeplitz(n, |k| uniform_delay_cf(k, DELAY_SPREAD) * uniform_delay_cf(k, window)),
                circular(m),
            )
        }
        Scenario::EqualPowerGrid { count, .. } => {
            let width = 2.0 * cfg.d_over_lambda;
            // nu uniform on the visible interval, centred at zero
            let space = GenieCovariance::toeplitz(m, |k| {
                let x = PI * k as f64 * width;
                C64::new(if k == 0 { 1.0 } else { x.sin() / x }, 0.0)
            });
            let freq = GenieCovariance::toeplitz(n, |k| C64::new(if k == 0 { *count as f64 } else { 0.0 }, 0.0));
            kron(freq, space)
        }
        Scenario::Custom { paths } => {
            let scaled: Vec<NormalizedPath> = paths
                .iter()
                .map(|x| {
                    let mut q = x.normalize(cfg);
                    q.gain *= power.sqrt();
                    q
                })
                .collect();
            GenieCovariance::from_paths(cfg, &scaled)
        }
    }
}

struct TrialOutcome {
    mse: [Option<f64>; 5],
    detected: usize,
}

struct Shared<'a> {
    cfg: &'a ReconstructionConfig,
    dl_pattern: PilotPattern,
    baseline_pattern: PilotPattern,
    filters: Vec<LmmseFilter>,
}

fn refined_downlink<R: rand::Rng>(
    sh: &Shared<'_>,
    truth: &[NormalizedPath],
    est: &[NormalizedPath],
    rng: &mut R,
) -> Result<ChannelVector> {
    let sys = &sh.cfg.system;
    if est.is_empty() {
        return Ok(ChannelVector::zeros(sys));
    }
    let btype = sh.cfg.beamforming;
    let y = simulate_downlink_pilots(sys, truth, est, btype, &sh.dl_pattern, sh.cfg.downlink_noise_variance, rng);
    let a = build_coefficient_matrix(sys, &sh.dl_pattern, est, btype)?;
    let g = refine_gains(&a, &y)?;
    reconstruct_downlink(sys, &g, est)
}

fn run_trial(sh: &Shared<'_>, trial: usize) -> Result<Vec<TrialOutcome>> {
    let cfg = sh.cfg;
    let sys = &cfg.system;
    cfg.snr_db
        .iter()
        .zip(&sh.filters)
        .map(|(&snr_db, filter)| {
            let mut rng = trial_rng(cfg.seed, trial as u64);
            let amp = db_to_linear(snr_db).sqrt();
            let truth: Vec<NormalizedPath> = generate_normalized(sys, &cfg.scenario, &mut rng)?
                .into_iter()
                .map(|p| NormalizedPath { gain: p.gain * amp, ..p })
                .collect();
            let h_ul = synthesize_normalized(sys, &truth);
            let h_dl = synthesize_downlink_normalized(sys, &truth);
            let mut y = h_ul.clone();
            add_noise(&mut y, 1.0, &mut rng);

            let est = nomp_extract(sys, &y, &cfg.nomp)?.paths;
            let ul = mse_metric(&synthesize_normalized(sys, &est), &h_ul)?;
            let inferred = mse_metric(&infer_downlink(sys, &est), &h_dl)?;
            let refined = match refined_downlink(sh, &truth, &est, &mut rng) {
                Ok(h) => Some(mse_metric(&h, &h_dl)?),
                Err(Error::RankDeficient { .. }) => None,
                Err(e) => return Err(e),
            };

            let mut pilots = sample_pilots(sys, &sh.baseline_pattern, &h_dl);
            add_noise_slice(&mut pilots, 1.0, &mut rng);
            let ls = mse_metric(&ls_estimate(sys, &sh.baseline_pattern, &pilots)?, &h_dl)?;
            let lmmse = mse_metric(&filter.apply(&pilots)?, &h_dl)?;

            Ok(TrialOutcome {
                mse: [Some(ls), Some(lmmse), Some(ul), refined, Some(inferred)],
                detected: est.len(),
            })
        })
        .collect()
}

/// Full uplink-to-downlink pipeline with LS/LMMSE references.
pub fn run_reconstruction_experiment(cfg: &ReconstructionConfig) -> Result<ReconstructionReport> {
    cfg.validate()?;
    let start = Instant::now();
    let sys = &cfg.system;
    let baseline_pattern = PilotPattern::new(sys, cfg.baseline_stride)?;
    let filters = cfg
        .snr_db
        .iter()
        .map(|&s| {
            let cov = genie_covariance(sys, &cfg.scenario, db_to_linear(s));
            LmmseFilter::new(sys, &baseline_pattern, &cov, 1.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let shared = Shared {
        cfg,
        dl_pattern: PilotPattern::new(sys, sys.pilot_stride)?,
        baseline_pattern,
        filters,
    };

    let outcomes: Vec<Vec<TrialOutcome>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(&shared, t))
        .collect::<Result<_>>()?;

    let points = cfg
        .snr_db
        .iter()
        .enumerate()
        .map(|(k, &snr_db)| {
            let curves = Curve::ALL
                .iter()
                .enumerate()
                .map(|(c, &curve)| {
                    let per_trial: Vec<f64> = outcomes.iter().filter_map(|o| o[k].mse[c]).collect();
                    let flagged = cfg.trials - per_trial.len();
                    if flagged > 0 {
                        log::warn!("{flagged} trial(s) flagged for {} at {snr_db} dB", curve.name());
                    }
                    let mean_mse = if per_trial.is_empty() {
                        f64::NAN
                    } else {
                        per_trial.iter().sum::<f64>() / per_trial.len() as f64
                    };
                    CurveStats {
                        curve,
                        mean_mse,
                        per_trial,
                        flagged,
                    }
                })
                .collect();
            let detected: usize = outcomes.iter().map(|o| o[k].detected).sum();
            ReconstructionPoint {
                snr_db,
                curves,
                mean_detected_paths: detected as f64 / cfg.trials as f64,
            }
        })
        .collect();

    Ok(ReconstructionReport {
        points,
        trials: cfg.trials,
        seed: cfg.seed,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

//! Run configuration: the JSON document handed to `fdd-recon run`.

use fdd_recon::downlink::BeamformingType;
use fdd_recon::harness::{
    CrbExperimentConfig, FalseAlarmConfig, PhaseErrorConfig, ReconstructionConfig, Scenario,
};
use fdd_recon::nomp::{NompConfig, StoppingRule};
use fdd_recon::SystemConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Subcarrier count used by `--paper-scale`.
pub const FULL_BAND_SUBCARRIERS: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Crb,
    Reconstruction,
    FalseAlarm,
    PhaseError,
}

/// An SNR point in dB; the string `"inf"` requests a noiseless run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SnrPoint {
    Db(f64),
    Label(InfLabel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfLabel {
    #[serde(rename = "inf")]
    Inf,
}

impl SnrPoint {
    pub fn db(self) -> f64 {
        match self {
            SnrPoint::Db(x) => x,
            SnrPoint::Label(InfLabel::Inf) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    /// JSON report plus CSV curve and CDF files.
    #[default]
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nomp: Option<NompConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snr_db: Vec<SnrPoint>,
    pub trials: usize,
    pub seed: u64,
    /// Equal-power paths per trial (crb).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    /// False-alarm probabilities to calibrate (false-alarm).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_fa: Option<Vec<f64>>,
    /// Downlink pilot beamforming (reconstruction, phase-error).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beamforming: Option<BeamformingType>,
    /// Comb stride of the LS/LMMSE pilots (reconstruction).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_stride: Option<usize>,
    /// Noise variance on downlink pilots (reconstruction, phase-error).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downlink_noise_variance: Option<f64>,
    /// Range of injected `dF * d_tau` (phase-error).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_range: Option<[f64; 2]>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// A validated configuration ready for the harness.
#[derive(Debug, Clone)]
pub enum Plan {
    Crb(CrbExperimentConfig),
    Reconstruction(ReconstructionConfig),
    FalseAlarm(FalseAlarmConfig),
    PhaseError(PhaseErrorConfig),
}

/// Parse a config document, naming the offending key on failure.
pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Config(format!(
            "line {}, column {}, key `{}`: {}",
            inner.line(),
            inner.column(),
            path,
            inner
        ))
    })
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// SHA-256 of the canonical JSON encoding.
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config is always serializable");
        hex::encode(Sha256::digest(&bytes))
    }

    fn reject(&self, present: bool, key: &str) -> Result<(), CliError> {
        if present {
            let exp = serde_json::to_value(self.experiment).expect("serializable");
            return Err(config_err(format!("key `{key}` does not apply to experiment {exp}")));
        }
        Ok(())
    }

    fn snr_list(&self, allow_inf: bool) -> Result<Vec<f64>, CliError> {
        if self.snr_db.is_empty() {
            return Err(config_err("`snr_db` needs at least one point"));
        }
        let v: Vec<f64> = self.snr_db.iter().map(|s| s.db()).collect();
        if v.iter().any(|x| x.is_nan() || (!allow_inf && x.is_infinite())) {
            return Err(config_err("`snr_db` points must be finite here"));
        }
        Ok(v)
    }

    /// Check every key against the chosen experiment and build the harness
    /// configuration.
    pub fn plan(&self) -> Result<Plan, CliError> {
        let lib = |e: fdd_recon::Error| config_err(e.to_string());
        self.system.validate().map_err(lib)?;
        if let Some(n) = &self.nomp {
            n.validate().map_err(lib)?;
        }
        if self.trials == 0 {
            return Err(config_err("`trials` must be >= 1"));
        }
        let plan = match self.experiment {
            Experiment::Crb => {
                self.reject(self.scenario.is_some(), "scenario")?;
                self.reject(self.p_fa.is_some(), "p_fa")?;
                self.reject(self.beamforming.is_some(), "beamforming")?;
                self.reject(self.baseline_stride.is_some(), "baseline_stride")?;
                self.reject(self.downlink_noise_variance.is_some(), "downlink_noise_variance")?;
                self.reject(self.offset_range.is_some(), "offset_range")?;
                let mut cfg = CrbExperimentConfig::new(self.system, self.snr_list(true)?, self.trials, self.seed);
                if let Some(n) = self.nomp {
                    cfg.nomp = n;
                }
                if let Some(p) = self.paths {
                    if p == 0 {
                        return Err(config_err("`paths` must be >= 1"));
                    }
                    cfg.paths = p;
                }
                Plan::Crb(cfg)
            }
            Experiment::Reconstruction => {
                self.reject(self.paths.is_some(), "paths")?;
                self.reject(self.p_fa.is_some(), "p_fa")?;
                self.reject(self.offset_range.is_some(), "offset_range")?;
                let scenario = self
                    .scenario
                    .clone()
                    .ok_or_else(|| config_err("reconstruction needs a `scenario`"))?;
                let mut cfg = ReconstructionConfig::new(self.system, scenario, self.snr_list(false)?, self.trials, self.seed);
                if let Some(n) = self.nomp {
                    cfg.nomp = n;
                }
                if let Some(b) = self.beamforming {
                    cfg.beamforming = b;
                }
                if let Some(s) = self.baseline_stride {
                    cfg.baseline_stride = s;
                }
                if let Some(v) = self.downlink_noise_variance {
                    cfg.downlink_noise_variance = v;
                }
                cfg.validate().map_err(lib)?;
                Plan::Reconstruction(cfg)
            }
            Experiment::FalseAlarm => {
                self.reject(self.scenario.is_some(), "scenario")?;
                self.reject(!self.snr_db.is_empty(), "snr_db")?;
                self.reject(self.paths.is_some(), "paths")?;
                self.reject(self.beamforming.is_some(), "beamforming")?;
                self.reject(self.baseline_stride.is_some(), "baseline_stride")?;
                self.reject(self.downlink_noise_variance.is_some(), "downlink_noise_variance")?;
                self.reject(self.offset_range.is_some(), "offset_range")?;
                let p_fa = self.p_fa.clone().unwrap_or_else(|| vec![0.01, 0.05]);
                for &p in &p_fa {
                    StoppingRule::FalseAlarm { p_fa: p }.validate().map_err(lib)?;
                }
                if p_fa.is_empty() {
                    return Err(config_err("`p_fa` needs at least one value"));
                }
                Plan::FalseAlarm(FalseAlarmConfig {
                    system: self.system,
                    nomp: self.nomp.unwrap_or_default(),
                    p_fa,
                    trials: self.trials,
                    seed: self.seed,
                })
            }
            Experiment::PhaseError => {
                self.reject(self.scenario.is_some(), "scenario")?;
                self.reject(self.nomp.is_some(), "nomp")?;
                self.reject(self.paths.is_some(), "paths")?;
                self.reject(self.p_fa.is_some(), "p_fa")?;
                self.reject(self.baseline_stride.is_some(), "baseline_stride")?;
                let mut cfg = PhaseErrorConfig::new(self.system, self.trials, self.seed);
                if !self.snr_db.is_empty() {
                    let v = self.snr_list(false)?;
                    if v.len() != 1 {
                        return Err(config_err("phase-error takes a single `snr_db` point"));
                    }
                    cfg.snr_db = v[0];
                }
                if let Some(b) = self.beamforming {
                    cfg.beamforming = b;
                }
                if let Some(v) = self.downlink_noise_variance {
                    cfg.downlink_noise_variance = v;
                }
                if let Some([lo, hi]) = self.offset_range {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(config_err("`offset_range` must be [low, high] with low <= high"));
                    }
                    cfg.min_offset = lo;
                    cfg.max_offset = hi;
                }
                if !(cfg.downlink_noise_variance >= 0.0) {
                    return Err(config_err("`downlink_noise_variance` must be >= 0"));
                }
                Plan::PhaseError(cfg)
            }
        };
        Ok(plan)
    }
}

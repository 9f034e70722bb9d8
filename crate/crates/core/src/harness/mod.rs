//! Scenario generation, noise, metrics and the Monte-Carlo experiments.
//!
//! Every experiment injects unit-variance noise per complex element and
//! sweeps SNR by scaling path gains. Trial `t` draws from stream `t` of a
//! ChaCha8 generator seeded with the experiment seed, so serial and parallel
//! runs produce identical numbers. The same stream is replayed at every SNR
//! point.

mod calibration;
mod crb;
mod metrics;
mod noise;
mod reconstruction;
mod scenario;

pub use calibration::{
    run_false_alarm_experiment, run_phase_error_experiment, FalseAlarmConfig, FalseAlarmPoint,
    FalseAlarmReport, PhaseErrorConfig, PhaseErrorReport, PhaseErrorTrial,
};
pub use crb::{run_crb_experiment, CrbExperimentConfig, CrbExperimentReport, CrbPoint};
pub use metrics::{db, empirical_cdf, match_paths, mse_metric, CdfPoint, PathMatching, DB_FLOOR};
pub use noise::{add_noise, add_noise_slice};
pub use reconstruction::{
    genie_covariance, run_reconstruction_experiment, Curve, CurveStats, ReconstructionConfig,
    ReconstructionPoint, ReconstructionReport,
};
pub use scenario::{generate_normalized, generate_scenario, Scenario, DELAY_SPREAD};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for trial `trial` of an experiment seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// `10^(x / 10)`.
pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

use serde::{Deserialize, Serialize};

use crate::model::{wrapped_distance, wrapped_offset};
use crate::{ChannelVector, Error, NormalizedPath, Result, SystemConfig};

/// Lowest value reported by [`db`].
pub const DB_FLOOR: f64 = -120.0;

/// `10 log10(x)`, floored at [`DB_FLOOR`].
pub fn db(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    (10.0 * x.log10()).max(DB_FLOOR)
}

/// `||estimate - truth||^2 / len`: the per-subcarrier error energy divided by
/// `M`, averaged over subcarriers. Unit-variance noise scores exactly 1.
pub fn mse_metric(estimate: &ChannelVector, truth: &ChannelVector) -> Result<f64> {
    if estimate.len() != truth.len() || estimate.antennas() != truth.antennas() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    Ok(estimate.distance_sqr(truth) / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub value: f64,
    pub probability: f64,
}

/// Empirical CDF: sorted samples with probabilities `(i + 1) / n`.
pub fn empirical_cdf(samples: &[f64]) -> Vec<CdfPoint> {
    let mut v: Vec<f64> = samples.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter()
        .enumerate()
        .map(|(i, value)| CdfPoint {
            value,
            probability: (i + 1) as f64 / n,
        })
        .collect()
}

/// Assignment of detections to true paths.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathMatching {
    /// `(truth index, detection index, mu error, nu error)` with signed
    /// wrapped errors.
    pub pairs: Vec<(usize, usize, f64, f64)>,
    pub missed: usize,
    pub false_alarms: usize,
}

/// Greedy nearest-neighbour matching in grid-cell units. Pairs further than
/// half a DFT cell apart in either coordinate are never matched.
pub fn match_paths(cfg: &SystemConfig, truth: &[NormalizedPath], detected: &[NormalizedPath]) -> PathMatching {
    let (n, m) = (cfg.subcarriers as f64, cfg.antennas as f64);
    let mut candidates = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, d) in detected.iter().enumerate() {
            let dm = n * wrapped_distance(t.mu, d.mu);
            let dn = m * wrapped_distance(t.nu, d.nu);
            if dm <= 0.5 && dn <= 0.5 {
                candidates.push((dm * dm + dn * dn, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_t = vec![false; truth.len()];
    let mut used_d = vec![false; detected.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if used_t[i] || used_d[j] {
            continue;
        }
        used_t[i] = true;
        used_d[j] = true;
        let (t, d) = (&truth[i], &detected[j]);
        pairs.push((i, j, wrapped_offset(d.mu, t.mu), wrapped_offset(d.nu, t.nu)));
    }
    pairs.sort_by_key(|p| p.0);
    PathMatching {
        missed: truth.len() - pairs.len(),
        false_alarms: detected.len() - pairs.len(),
        pairs,
    }
}

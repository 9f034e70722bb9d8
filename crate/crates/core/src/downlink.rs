//! Downlink gain refinement with beamformed pilots.
//!
//! Delays and angles estimated on the uplink are reused on the downlink. The
//! base station beams pilots towards the estimated directions, the terminal
//! re-estimates one complex gain per path by least squares, and those
//! `L` gains are all that needs to be fed back.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::harness::add_noise_slice;
use crate::linalg::least_squares;
use crate::model::{cis, steering_vector, synthesize_downlink_normalized};
use crate::{ChannelVector, Error, NormalizedPath, Result, SystemConfig, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamformingType {
    /// One OFDM symbol per estimated direction, every pilot on that beam.
    Type1,
    /// A single OFDM symbol; pilot `i` is beamed to direction `i mod L`.
    Type2,
}

/// Uniform comb of downlink pilot subcarriers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotPattern {
    stride: usize,
    indices: Vec<i64>,
}

impl PilotPattern {
    /// `floor(N / K)` pilots starting at the lowest in-band subcarrier.
    pub fn new(cfg: &SystemConfig, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidConfig("pilot stride must be >= 1".into()));
        }
        let count = cfg.subcarriers / stride;
        if count == 0 {
            return Err(Error::InvalidConfig(format!(
                "pilot stride {stride} leaves no pilots on {} subcarriers",
                cfg.subcarriers
            )));
        }
        let first = -cfg.subcarrier_offset();
        let indices = (0..count).map(|i| first + (i * stride) as i64).collect();
        Ok(Self { stride, indices })
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Subcarrier indices `n_i`, strictly increasing.
    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Positions of the pilots in `0..N`.
    pub fn rows(&self, cfg: &SystemConfig) -> impl Iterator<Item = usize> + '_ {
        let off = cfg.subcarrier_offset();
        self.indices.iter().map(move |&n| (n + off) as usize)
    }
}

/// `a(nu_l)^H a(nu_j)` for every pair, indexed `[l][j]`.
fn beam_products(cfg: &SystemConfig, paths: &[NormalizedPath], beams: &[NormalizedPath]) -> Vec<Vec<C64>> {
    let beam_vecs: Vec<_> = beams.iter().map(|b| steering_vector(cfg, b.nu)).collect();
    paths
        .iter()
        .map(|p| {
            let a = steering_vector(cfg, p.nu);
            beam_vecs
                .iter()
                .map(|w| a.iter().zip(w).map(|(x, y)| x.conj() * y).sum())
                .collect()
        })
        .collect()
}

/// Number of pilot observations for `paths` detected paths.
pub fn observation_count(pattern: &PilotPattern, paths: usize, btype: BeamformingType) -> usize {
    match btype {
        BeamformingType::Type1 => pattern.len() * paths,
        BeamformingType::Type2 => pattern.len(),
    }
}

/// Response matrix of `paths` to pilots beamed at `beams`: entry `(row, l)`
/// is `exp(j 2 pi (dF + n_i df) tau_l) a(nu_l)^H a(nu_beam(row))`.
fn response_matrix(
    cfg: &SystemConfig,
    pattern: &PilotPattern,
    paths: &[NormalizedPath],
    beams: &[NormalizedPath],
    btype: BeamformingType,
) -> DMatrix<C64> {
    let nb = beams.len();
    let products = beam_products(cfg, paths, beams);
    let rows = observation_count(pattern, nb, btype);
    let phase = |n: i64, p: &NormalizedPath| {
        cis(2.0 * PI * (cfg.carrier_offset * p.delay(cfg) + n as f64 * p.mu))
    };
    let mut a = DMatrix::zeros(rows, paths.len());
    for (l, p) in paths.iter().enumerate() {
        for (i, &n) in pattern.indices().iter().enumerate() {
            let rot = phase(n, p);
            match btype {
                BeamformingType::Type1 => {
                    for (j, prod) in products[l].iter().enumerate() {
                        a[(j * pattern.len() + i, l)] = rot * prod;
                    }
                }
                BeamformingType::Type2 => {
                    a[(i, l)] = rot * products[l][i % nb];
                }
            }
        }
    }
    a
}

/// Coefficient matrix `A` of the refinement problem. Type 1 stacks one
/// `Np x L` block per beam (row `j Np + i`); Type 2 has `Np` rows.
pub fn build_coefficient_matrix(
    cfg: &SystemConfig,
    pattern: &PilotPattern,
    estimates: &[NormalizedPath],
    btype: BeamformingType,
) -> Result<DMatrix<C64>> {
    if estimates.is_empty() {
        return Err(Error::EmptyEstimates);
    }
    Ok(response_matrix(cfg, pattern, estimates, estimates, btype))
}

/// Received downlink pilots: the true paths seen through beams steered at the
/// estimated directions, plus circular Gaussian noise.
pub fn simulate_downlink_pilots<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    true_paths: &[NormalizedPath],
    estimates: &[NormalizedPath],
    btype: BeamformingType,
    pattern: &PilotPattern,
    noise_variance: f64,
    rng: &mut R,
) -> DVector<C64> {
    let rows = observation_count(pattern, estimates.len().max(1), btype);
    let mut y = if estimates.is_empty() || true_paths.is_empty() {
        DVector::zeros(rows)
    } else {
        let a = response_matrix(cfg, pattern, true_paths, estimates, btype);
        let g = DVector::from_iterator(true_paths.len(), true_paths.iter().map(|p| p.gain));
        a * g
    };
    add_noise_slice(y.as_mut_slice(), noise_variance, rng);
    y
}

/// `g = A^+ y` through a QR factorization.
pub fn refine_gains(a: &DMatrix<C64>, y_dl: &DVector<C64>) -> Result<Vec<C64>> {
    Ok(least_squares(a, y_dl)?.iter().copied().collect())
}

/// Rebuild the full downlink channel from refined gains and uplink
/// delays/angles.
pub fn reconstruct_downlink(
    cfg: &SystemConfig,
    refined_gains: &[C64],
    estimates: &[NormalizedPath],
) -> Result<ChannelVector> {
    if refined_gains.len() != estimates.len() {
        return Err(Error::DimensionMismatch {
            expected: estimates.len(),
            got: refined_gains.len(),
        });
    }
    let paths: Vec<_> = estimates
        .iter()
        .zip(refined_gains)
        .map(|(p, g)| NormalizedPath { gain: *g, ..*p })
        .collect();
    Ok(synthesize_downlink_normalized(cfg, &paths))
}

/// Downlink channel inferred directly from uplink estimates (gains reused).
pub fn infer_downlink(cfg: &SystemConfig, estimates: &[NormalizedPath]) -> ChannelVector {
    synthesize_downlink_normalized(cfg, estimates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn pilot_pattern_layout() {
        let cfg = SystemConfig::new(4, 18);
        let p = PilotPattern::new(&cfg, 4).unwrap();
        assert_eq!(p.indices(), &[-9, -5, -1, 3]);
        assert_eq!(p.rows(&cfg).collect::<Vec<_>>(), vec![0, 4, 8, 12]);
        assert!(p.indices().windows(2).all(|w| w[1] - w[0] == 4));
        assert!(PilotPattern::new(&cfg, 0).is_err());
        assert!(PilotPattern::new(&cfg, 19).is_err());
    }

    #[test]
    fn single_estimate_column() {
        let cfg = SystemConfig::new(4, 16);
        let pattern = PilotPattern::new(&cfg, 4).unwrap();
        let est = [NormalizedPath::new(c(1.0, 0.0), 0.013, 0.37)];
        for btype in [BeamformingType::Type1, BeamformingType::Type2] {
            let a = build_coefficient_matrix(&cfg, &pattern, &est, btype).unwrap();
            assert_eq!(a.shape(), (4, 1));
            for (i, &n) in pattern.indices().iter().enumerate() {
                let tau = 0.013 / cfg.subcarrier_spacing;
                let phase = 2.0 * PI * (cfg.carrier_offset + n as f64 * cfg.subcarrier_spacing) * tau;
                let want = C64::from_polar(4.0, phase);
                assert!((a[(i, 0)] - want).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn dimensions_per_type() {
        let cfg = SystemConfig::new(4, 8);
        let pattern = PilotPattern::new(&cfg, 4).unwrap();
        let est = [
            NormalizedPath::new(c(1.0, 0.0), 0.1, 0.2),
            NormalizedPath::new(c(1.0, 0.0), 0.3, 0.6),
        ];
        let a1 = build_coefficient_matrix(&cfg, &pattern, &est, BeamformingType::Type1).unwrap();
        let a2 = build_coefficient_matrix(&cfg, &pattern, &est, BeamformingType::Type2).unwrap();
        assert_eq!(a1.shape(), (4, 2));
        assert_eq!(a2.shape(), (2, 2));
        assert!(matches!(
            build_coefficient_matrix(&cfg, &pattern, &[], BeamformingType::Type1),
            Err(Error::EmptyEstimates)
        ));
    }

    #[test]
    fn orthogonal_beams_give_block_structure() {
        let cfg = SystemConfig::new(4, 16);
        let pattern = PilotPattern::new(&cfg, 4).unwrap();
        let est = [
            NormalizedPath::new(c(1.0, 0.0), 0.1, 0.0),
            NormalizedPath::new(c(1.0, 0.0), 0.2, 0.25),
        ];
        let a = build_coefficient_matrix(&cfg, &pattern, &est, BeamformingType::Type1).unwrap();
        let np = pattern.len();
        for i in 0..np {
            assert!(a[(i, 1)].norm() < 1e-12);
            assert!(a[(np + i, 0)].norm() < 1e-12);
            assert!((a[(i, 0)].norm() - 4.0).abs() < 1e-12);
            assert!((a[(np + i, 1)].norm() - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_pilots_equal_a_times_g() {
        let cfg = SystemConfig::new(8, 32);
        let pattern = PilotPattern::new(&cfg, 4).unwrap();
        let truth = [
            NormalizedPath::new(c(0.4, -0.9), 0.02, 0.11),
            NormalizedPath::new(c(-1.1, 0.3), 0.05, 0.52),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for btype in [BeamformingType::Type1, BeamformingType::Type2] {
            let y = simulate_downlink_pilots(&cfg, &truth, &truth, btype, &pattern, 0.0, &mut rng);
            let a = build_coefficient_matrix(&cfg, &pattern, &truth, btype).unwrap();
            let g = DVector::from_vec(truth.iter().map(|p| p.gain).collect());
            assert!((y.clone() - &a * &g).norm() < 1e-12 * y.norm());
            let refined = refine_gains(&a, &y).unwrap();
            for (r, p) in refined.iter().zip(&truth) {
                assert!((r - p.gain).norm() <= 1e-9 * p.gain.norm());
            }
            let h = reconstruct_downlink(&cfg, &refined, &truth).unwrap();
            let want = synthesize_downlink_normalized(&cfg, &truth);
            assert!(h.distance_sqr(&want).sqrt() <= 1e-9 * want.norm_sqr().sqrt());
        }
    }

    #[test]
    fn no_true_paths_is_pure_noise() {
        let cfg = SystemConfig::new(4, 16);
        let pattern = PilotPattern::new(&cfg, 4).unwrap();
        let est = [NormalizedPath::new(c(1.0, 0.0), 0.1, 0.2)];
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let y = simulate_downlink_pilots(&cfg, &[], &est, BeamformingType::Type1, &pattern, 1.0, &mut r1);
        let mut z = DVector::zeros(4);
        add_noise_slice(z.as_mut_slice(), 1.0, &mut r2);
        assert_eq!(y, z);
    }

    #[test]
    fn both_types_agree_for_one_path() {
        let cfg = SystemConfig::new(4, 16);
        let pattern = PilotPattern::new(&cfg, 2).unwrap();
        let truth = [NormalizedPath::new(c(0.7, 0.2), 0.04, 0.8)];
        let est = [NormalizedPath::new(c(0.7, 0.2), 0.041, 0.79)];
        let mut r1 = ChaCha8Rng::seed_from_u64(11);
        let mut r2 = ChaCha8Rng::seed_from_u64(11);
        let y1 = simulate_downlink_pilots(&cfg, &truth, &est, BeamformingType::Type1, &pattern, 1.0, &mut r1);
        let y2 = simulate_downlink_pilots(&cfg, &truth, &est, BeamformingType::Type2, &pattern, 1.0, &mut r2);
        assert_eq!(y1, y2);
    }

    #[test]
    fn scalar_refinement() {
        let cfg = SystemConfig::new(4, 16);
        let pattern = PilotPattern::new(&cfg, 4).unwrap();
        let est = [NormalizedPath::new(c(1.0, 0.0), 0.07, 0.3)];
        let a = build_coefficient_matrix(&cfg, &pattern, &est, BeamformingType::Type1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut y = DVector::zeros(4);
        add_noise_slice(y.as_mut_slice(), 1.0, &mut rng);
        let g = refine_gains(&a, &y).unwrap();
        let num: C64 = a.column(0).iter().zip(y.iter()).map(|(ci, yi)| ci.conj() * yi).sum();
        let den: f64 = a.column(0).iter().map(|ci| ci.norm_sqr()).sum();
        assert!((g[0] - num / den).norm() < 1e-12);
    }

    #[test]
    fn type2_with_too_few_pilots_is_rank_deficient() {
        let cfg = SystemConfig::new(4, 8);
        let pattern = PilotPattern::new(&cfg, 4).unwrap();
        let est: Vec<_> = (0..3)
            .map(|l| NormalizedPath::new(c(1.0, 0.0), 0.1 * l as f64, 0.25 * l as f64))
            .collect();
        let a = build_coefficient_matrix(&cfg, &pattern, &est, BeamformingType::Type2).unwrap();
        let y = DVector::zeros(a.nrows());
        assert!(matches!(refine_gains(&a, &y), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn reconstruct_edge_cases() {
        let cfg = SystemConfig::new(4, 8);
        let h = reconstruct_downlink(&cfg, &[], &[]).unwrap();
        assert_eq!(h.norm_sqr(), 0.0);
        let est = [NormalizedPath::new(c(1.0, 0.0), 0.1, 0.2)];
        assert!(reconstruct_downlink(&cfg, &[], &est).is_err());
    }
}

//! Reference downlink estimators fed by unbeamformed comb pilots.
//!
//! Pilot observations are laid out like a short channel vector: pilot `i`
//! on antenna `m` sits at `i * M + m`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::downlink::PilotPattern;
use crate::model::accumulate_atom;
use crate::{ChannelVector, Error, NormalizedPath, Result, SystemConfig, C64};

/// Diagonal loading applied when the pilot covariance is numerically singular.
pub const DIAGONAL_LOADING: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Ls,
    Lmmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub stride: usize,
    pub estimator: Estimator,
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::InvalidConfig("baseline pilot stride must be >= 1".into()));
        }
        Ok(())
    }
}

fn check_pilots(cfg: &SystemConfig, pattern: &PilotPattern, pilots: &[C64]) -> Result<()> {
    let expected = pattern.len() * cfg.antennas;
    if pilots.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: pilots.len(),
        });
    }
    Ok(())
}

/// Channel samples at the pilot subcarriers, all antennas.
pub fn sample_pilots(cfg: &SystemConfig, pattern: &PilotPattern, h: &ChannelVector) -> Vec<C64> {
    pattern
        .rows(cfg)
        .flat_map(|r| h.subcarrier_row(r).iter().copied())
        .collect()
}

/// Per-pilot LS (all-one pilots) followed by linear interpolation along
/// frequency for each antenna; band edges hold the nearest pilot.
pub fn ls_estimate(cfg: &SystemConfig, pattern: &PilotPattern, pilots: &[C64]) -> Result<ChannelVector> {
    check_pilots(cfg, pattern, pilots)?;
    let m = cfg.antennas;
    let rows: Vec<usize> = pattern.rows(cfg).collect();
    let pilot_row = |i: usize| &pilots[i * m..(i + 1) * m];

    let mut out = ChannelVector::zeros(cfg);
    let data = out.as_mut_slice();
    let last = rows.len() - 1;
    let mut seg = 0;
    for r in 0..cfg.subcarriers {
        let dst = &mut data[r * m..(r + 1) * m];
        if r <= rows[0] {
            dst.copy_from_slice(pilot_row(0));
        } else if r >= rows[last] {
            dst.copy_from_slice(pilot_row(last));
        } else {
            while rows[seg + 1] < r {
                seg += 1;
            }
            let (r0, r1) = (rows[seg], rows[seg + 1]);
            let t = (r - r0) as f64 / (r1 - r0) as f64;
            for ((d, a), b) in dst.iter_mut().zip(pilot_row(seg)).zip(pilot_row(seg + 1)) {
                *d = a * (1.0 - t) + b * t;
            }
        }
    }
    Ok(out)
}

/// Second-order channel statistics handed to the LMMSE estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum GenieCovariance {
    /// `R = R_freq (x) R_space`, matching the subcarrier-major stacking.
    Kronecker {
        freq: DMatrix<C64>,
        space: DMatrix<C64>,
    },
    /// Full `MN x MN` covariance.
    Dense(DMatrix<C64>),
}

impl GenieCovariance {
    /// Hermitian Toeplitz matrix with first column `c(0), c(1), ...` where
    /// `c(k) = E[x_{i+k} conj(x_i)]`.
    pub fn toeplitz(len: usize, corr: impl Fn(i64) -> C64) -> DMatrix<C64> {
        let lags: Vec<C64> = (0..len as i64).map(&corr).collect();
        DMatrix::from_fn(len, len, |i, j| {
            if i >= j {
                lags[i - j]
            } else {
                lags[j - i].conj()
            }
        })
    }

    /// Covariance `sum_l |g_l|^2 u_l u_l^H` of a fixed path set with
    /// independent uniform gain phases.
    pub fn from_paths(cfg: &SystemConfig, paths: &[NormalizedPath]) -> Self {
        let n = cfg.len();
        let mut r = DMatrix::zeros(n, n);
        for p in paths {
            let mut u = ChannelVector::zeros(cfg);
            accumulate_atom(cfg, &mut u, C64::new(1.0, 0.0), p.mu, p.nu);
            let u = DVector::from_column_slice(u.as_slice());
            r += (&u * u.adjoint()) * C64::new(p.gain.norm_sqr(), 0.0);
        }
        GenieCovariance::Dense(r)
    }

    pub fn dim(&self) -> usize {
        match self {
            GenieCovariance::Kronecker { freq, space } => freq.nrows() * space.nrows(),
            GenieCovariance::Dense(r) => r.nrows(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match self {
            GenieCovariance::Dense(r) => r.clone(),
            GenieCovariance::Kronecker { freq, space } => freq.kronecker(space),
        }
    }
}

/// Precomputed LMMSE interpolator `h = R_hp (R_pp + s^2 I)^-1 y_p`.
#[derive(Debug, Clone)]
pub struct LmmseFilter {
    cfg: SystemConfig,
    pilots: usize,
    kind: FilterKind,
}

#[derive(Debug, Clone)]
enum FilterKind {
    Kronecker {
        freq_basis: DMatrix<C64>,
        freq_out: DMatrix<C64>,
        space_basis: DMatrix<C64>,
        space_out: DMatrix<C64>,
        weights: DMatrix<f64>,
    },
    Dense(DMatrix<C64>),
}

impl LmmseFilter {
    pub fn new(
        cfg: &SystemConfig,
        pattern: &PilotPattern,
        cov: &GenieCovariance,
        noise_variance: f64,
    ) -> Result<Self> {
        if cov.dim() != cfg.len() {
            return Err(Error::DimensionMismatch {
                expected: cfg.len(),
                got: cov.dim(),
            });
        }
        if !(noise_variance >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise variance must be non-negative, got {noise_variance}"
            )));
        }
        let rows: Vec<usize> = pattern.rows(cfg).collect();
        let kind = match cov {
            GenieCovariance::Kronecker { freq, space } => {
                if freq.nrows() != cfg.subcarriers || space.nrows() != cfg.antennas {
                    return Err(Error::DimensionMismatch {
                        expected: cfg.subcarriers,
                        got: freq.nrows(),
                    });
                }
                let np = rows.len();
                let pp = DMatrix::from_fn(np, np, |i, j| freq[(rows[i], rows[j])]);
                let hp = DMatrix::from_fn(cfg.subcarriers, np, |i, j| freq[(i, rows[j])]);
                let fe = pp.symmetric_eigen();
                let se = space.clone().symmetric_eigen();
                let mut loaded = false;
                let weights = DMatrix::from_fn(np, cfg.antennas, |i, m| {
                    let mut d = fe.eigenvalues[i].max(0.0) * se.eigenvalues[m].max(0.0) + noise_variance;
                    if d <= DIAGONAL_LOADING {
                        d += DIAGONAL_LOADING;
                        loaded = true;
                    }
                    1.0 / d
                });
                if loaded {
                    log::warn!("singular pilot covariance; applied diagonal loading {DIAGONAL_LOADING:e}");
                }
                let freq_out = &hp * &fe.eigenvectors;
                let space_out = space * &se.eigenvectors;
                FilterKind::Kronecker {
                    freq_basis: fe.eigenvectors,
                    freq_out,
                    space_basis: se.eigenvectors,
                    space_out,
                    weights,
                }
            }
            GenieCovariance::Dense(r) => {
                let m = cfg.antennas;
                let idx: Vec<usize> = rows.iter().flat_map(|&row| (0..m).map(move |a| row * m + a)).collect();
                let k = idx.len();
                let hp = DMatrix::from_fn(cfg.len(), k, |i, j| r[(i, idx[j])]);
                let mut pp = DMatrix::from_fn(k, k, |i, j| r[(idx[i], idx[j])]);
                for i in 0..k {
                    pp[(i, i)] += noise_variance;
                }
                let chol = match pp.clone().cholesky() {
                    Some(c) => c,
                    None => {
                        log::warn!("singular pilot covariance; applied diagonal loading {DIAGONAL_LOADING:e}");
                        for i in 0..k {
                            pp[(i, i)] += DIAGONAL_LOADING;
                        }
                        pp.cholesky().ok_or_else(|| {
                            Error::InvalidConfig("pilot covariance is not positive semi-definite".into())
                        })?
                    }
                };
                // F = R_hp P^-1 = (P^-1 R_hp^H)^H for Hermitian P
                FilterKind::Dense(chol.solve(&hp.adjoint()).adjoint())
            }
        };
        Ok(Self {
            cfg: *cfg,
            pilots: rows.len(),
            kind,
        })
    }

    pub fn apply(&self, pilots: &[C64]) -> Result<ChannelVector> {
        let m = self.cfg.antennas;
        if pilots.len() != self.pilots * m {
            return Err(Error::DimensionMismatch {
                expected: self.pilots * m,
                got: pilots.len(),
            });
        }
        let data = match &self.kind {
            FilterKind::Kronecker {
                freq_basis,
                freq_out,
                space_basis,
                space_out,
                weights,
            } => {
                // pilots as an Np x M matrix, row-major
                let y = DMatrix::from_row_slice(self.pilots, m, pilots);
                let z = freq_basis.adjoint() * y * space_basis.map(|x| x.conj());
                let w = z.zip_map(weights, |a, b| a * b);
                let h = freq_out * w * space_out.transpose();
                // back to subcarrier-major
                h.transpose().as_slice().to_vec()
            }
            FilterKind::Dense(f) => (f * DVector::from_column_slice(pilots)).as_slice().to_vec(),
        };
        ChannelVector::from_vec(&self.cfg, data)
    }
}

/// Linear MMSE estimate from comb pilots with genie statistics.
pub fn lmmse_estimate(
    cfg: &SystemConfig,
    pattern: &PilotPattern,
    pilots: &[C64],
    cov: &GenieCovariance,
    noise_variance: f64,
) -> Result<ChannelVector> {
    check_pilots(cfg, pattern, pilots)?;
    LmmseFilter::new(cfg, pattern, cov, noise_variance)?.apply(pilots)
}

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::wrapped_distance;
use crate::{Error, NormalizedPath, PathComponent, Result, SystemConfig, C64};

/// Largest normalized delay `df * tau` drawn for the random-geometry
/// scenarios.
pub const DELAY_SPREAD: f64 = 1.0 / 16.0;

const MAX_DRAWS_PER_PATH: usize = 10_000;
const MAX_RESTARTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Scenario {
    /// Two paths, independent delays and angles, Gaussian gains normalized to
    /// unit total power.
    SparseTwoPath,
    /// One cluster: a common random centre, angles within
    /// `angular_spread_deg` of it and delays within `3 / N` of the first.
    Cluster {
        #[serde(default = "default_cluster_paths")]
        paths: usize,
        #[serde(default = "default_spread")]
        angular_spread_deg: f64,
    },
    /// Unit-power paths uniformly placed on the normalized plane with
    /// wrapped separations at least `min_sep_mu` and `min_sep_nu`
    /// (default `1 / N` and `1 / M`).
    EqualPowerGrid {
        #[serde(default = "default_grid_count")]
        count: usize,
        #[serde(default)]
        min_sep_mu: Option<f64>,
        #[serde(default)]
        min_sep_nu: Option<f64>,
    },
    Custom { paths: Vec<PathComponent> },
}

fn default_cluster_paths() -> usize {
    6
}

fn default_spread() -> f64 {
    30.0
}

fn default_grid_count() -> usize {
    15
}

impl Scenario {
    pub fn cluster() -> Self {
        Scenario::Cluster {
            paths: default_cluster_paths(),
            angular_spread_deg: default_spread(),
        }
    }

    pub fn equal_power_grid(count: usize) -> Self {
        Scenario::EqualPowerGrid {
            count,
            min_sep_mu: None,
            min_sep_nu: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Scenario::Cluster {
                paths,
                angular_spread_deg,
            } => {
                if *paths == 0 || !(*angular_spread_deg >= 0.0 && *angular_spread_deg <= 360.0) {
                    return Err(Error::InvalidConfig(
                        "cluster needs >= 1 path and a spread in [0, 360] degrees".into(),
                    ));
                }
            }
            Scenario::EqualPowerGrid {
                min_sep_mu, min_sep_nu, ..
            } => {
                for s in [min_sep_mu, min_sep_nu].into_iter().flatten() {
                    if !(*s >= 0.0) {
                        return Err(Error::InvalidConfig(format!("separation must be >= 0, got {s}")));
                    }
                }
            }
            Scenario::SparseTwoPath | Scenario::Custom { .. } => {}
        }
        Ok(())
    }
}

fn gaussian_gains<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<C64> {
    let g: Vec<C64> = (0..count)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re, im)
        })
        .collect();
    let power: f64 = g.iter().map(|z| z.norm_sqr()).sum();
    let scale = power.sqrt().recip();
    g.into_iter().map(|z| z * scale).collect()
}

fn random_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(0.0..2.0 * PI)
}

fn spatial_frequency(cfg: &SystemConfig, angle: f64) -> f64 {
    cfg.d_over_lambda * angle.sin()
}

fn equal_power_grid<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    count: usize,
    sep_mu: f64,
    sep_nu: f64,
    rng: &mut R,
) -> Result<Vec<NormalizedPath>> {
    // the visible part of the nu circle has length 2 d / lambda
    let visible = 2.0 * cfg.d_over_lambda;
    if count as f64 * sep_mu >= 1.0 || count as f64 * sep_nu >= visible {
        return Err(Error::InfeasibleSeparation { count });
    }
    for _ in 0..MAX_RESTARTS {
        let mut paths: Vec<NormalizedPath> = Vec::with_capacity(count);
        'place: while paths.len() < count {
            for _ in 0..MAX_DRAWS_PER_PATH {
                let mu = rng.random::<f64>();
                let nu = rng.random_range(-cfg.d_over_lambda..cfg.d_over_lambda);
                let phase = rng.random_range(0.0..2.0 * PI);
                let cand = NormalizedPath::new(C64::from_polar(1.0, phase), mu, nu);
                let ok = paths.iter().all(|p| {
                    wrapped_distance(p.mu, cand.mu) >= sep_mu && wrapped_distance(p.nu, cand.nu) >= sep_nu
                });
                if ok {
                    paths.push(cand);
                    continue 'place;
                }
            }
            break;
        }
        if paths.len() == count {
            return Ok(paths);
        }
    }
    Err(Error::InfeasibleSeparation { count })
}

/// Draw a path set in normalized coordinates. Gains have unit total power,
/// except for `EqualPowerGrid` where every path has unit power.
pub fn generate_normalized<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    scenario: &Scenario,
    rng: &mut R,
) -> Result<Vec<NormalizedPath>> {
    scenario.validate()?;
    match scenario {
        Scenario::SparseTwoPath => {
            let gains = gaussian_gains(2, rng);
            Ok(gains
                .into_iter()
                .map(|g| {
                    let mu = rng.random_range(0.0..DELAY_SPREAD);
                    let nu = spatial_frequency(cfg, random_angle(rng));
                    NormalizedPath::new(g, mu, nu)
                })
                .collect())
        }
        Scenario::Cluster {
            paths,
            angular_spread_deg,
        } => {
            let gains = gaussian_gains(*paths, rng);
            let centre = random_angle(rng);
            let base = rng.random_range(0.0..DELAY_SPREAD);
            let half = angular_spread_deg.to_radians() / 2.0;
            let window = 3.0 / cfg.subcarriers as f64;
            Ok(gains
                .into_iter()
                .map(|g| {
                    let offset = if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
                    let mu = base + rng.random_range(0.0..window);
                    NormalizedPath::new(g, mu, spatial_frequency(cfg, centre + offset))
                })
                .collect())
        }
        Scenario::EqualPowerGrid {
            count,
            min_sep_mu,
            min_sep_nu,
        } => equal_power_grid(
            cfg,
            *count,
            min_sep_mu.unwrap_or(1.0 / cfg.subcarriers as f64),
            min_sep_nu.unwrap_or(1.0 / cfg.antennas as f64),
            rng,
        ),
        Scenario::Custom { paths } => Ok(paths.iter().map(|p| p.normalize(cfg)).collect()),
    }
}

/// Draw a path set in physical units.
pub fn generate_scenario<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    scenario: &Scenario,
    rng: &mut R,
) -> Result<Vec<PathComponent>> {
    if let Scenario::Custom { paths } = scenario {
        return Ok(paths.clone());
    }
    generate_normalized(cfg, scenario, rng)?
        .iter()
        .map(|p| p.denormalize(cfg))
        .collect()
}

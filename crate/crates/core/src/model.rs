//! System geometry, path parameters and channel synthesis.
//!
//! Antenna indices run over `m = -floor(M/2) ..= ceil(M/2) - 1` and subcarrier
//! indices over `n = -floor(N/2) ..= ceil(N/2) - 1`, so the reference antenna
//! and the DC subcarrier both sit at index 0. Stacked vectors are
//! subcarrier-major: the sample for `(n, m)` lives at
//! `(n + floor(N/2)) * M + (m + floor(M/2))`, which is the layout of the
//! Kronecker product `p(mu) (x) a(nu)`.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Reduce `x` into `[0, 1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid rounds tiny negative inputs up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance between two points on the unit circle `[0, 1)`.
pub fn wrapped_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Signed offset `a - b` reduced into `[-0.5, 0.5)`.
pub fn wrapped_offset(a: f64, b: f64) -> f64 {
    let d = (a - b + 0.5).rem_euclid(1.0) - 0.5;
    if d >= 0.5 {
        d - 1.0
    } else {
        d
    }
}

#[inline]
pub(crate) fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

/// Array and OFDM numerology shared by uplink and downlink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of ULA elements `M`.
    pub antennas: usize,
    /// Number of subcarriers `N` per band.
    pub subcarriers: usize,
    /// Subcarrier spacing in Hz.
    #[serde(default = "default_subcarrier_spacing")]
    pub subcarrier_spacing: f64,
    /// Downlink minus uplink carrier frequency in Hz.
    #[serde(default = "default_carrier_offset")]
    pub carrier_offset: f64,
    /// Element spacing over wavelength.
    #[serde(default = "default_d_over_lambda")]
    pub d_over_lambda: f64,
    /// Downlink pilot stride `K`.
    #[serde(default = "default_pilot_stride")]
    pub pilot_stride: usize,
}

fn default_subcarrier_spacing() -> f64 {
    75e3
}

fn default_carrier_offset() -> f64 {
    300e6
}

fn default_d_over_lambda() -> f64 {
    0.5
}

fn default_pilot_stride() -> usize {
    4
}

impl SystemConfig {
    pub fn new(antennas: usize, subcarriers: usize) -> Self {
        Self {
            antennas,
            subcarriers,
            subcarrier_spacing: default_subcarrier_spacing(),
            carrier_offset: default_carrier_offset(),
            d_over_lambda: default_d_over_lambda(),
            pilot_stride: default_pilot_stride(),
        }
    }

    pub fn with_carrier_offset(mut self, carrier_offset: f64) -> Self {
        self.carrier_offset = carrier_offset;
        self
    }

    pub fn with_pilot_stride(mut self, stride: usize) -> Self {
        self.pilot_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.antennas == 0 {
            return fail("antennas must be >= 1".into());
        }
        if self.subcarriers == 0 {
            return fail("subcarriers must be >= 1".into());
        }
        if !(self.subcarrier_spacing > 0.0 && self.subcarrier_spacing.is_finite()) {
            return fail(format!(
                "subcarrier_spacing must be positive, got {}",
                self.subcarrier_spacing
            ));
        }
        if !self.carrier_offset.is_finite() {
            return fail("carrier_offset must be finite".into());
        }
        if self.pilot_stride == 0 {
            return fail("pilot_stride must be >= 1".into());
        }
        if !(self.d_over_lambda > 0.0 && self.d_over_lambda <= 0.5) {
            return fail(format!(
                "d_over_lambda must lie in (0, 0.5], got {}",
                self.d_over_lambda
            ));
        }
        Ok(())
    }

    /// `M * N`, the length of a stacked channel vector.
    pub fn len(&self) -> usize {
        self.antennas * self.subcarriers
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn antenna_offset(&self) -> i64 {
        (self.antennas / 2) as i64
    }

    pub fn subcarrier_offset(&self) -> i64 {
        (self.subcarriers / 2) as i64
    }

    pub fn antenna_indices(&self) -> impl Iterator<Item = i64> + Clone {
        let lo = -self.antenna_offset();
        (0..self.antennas as i64).map(move |k| lo + k)
    }

    pub fn subcarrier_indices(&self) -> impl Iterator<Item = i64> + Clone {
        let lo = -self.subcarrier_offset();
        (0..self.subcarriers as i64).map(move |k| lo + k)
    }

    /// Flat position of subcarrier index `n` and antenna index `m`.
    pub fn flat_index(&self, n: i64, m: i64) -> usize {
        let row = (n + self.subcarrier_offset()) as usize;
        let col = (m + self.antenna_offset()) as usize;
        row * self.antennas + col
    }
}

/// One propagation path in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathComponent {
    pub gain: C64,
    /// Delay in seconds, `0 <= delay < 1 / subcarrier_spacing`.
    pub delay: f64,
    /// Angle of arrival/departure in radians.
    pub angle: f64,
}

impl PathComponent {
    pub fn new(gain: C64, delay: f64, angle: f64) -> Self {
        Self { gain, delay, angle }
    }

    pub fn normalize(&self, cfg: &SystemConfig) -> NormalizedPath {
        NormalizedPath {
            gain: self.gain,
            mu: wrap_unit(cfg.subcarrier_spacing * self.delay),
            nu: wrap_unit(cfg.d_over_lambda * self.angle.sin()),
        }
    }
}

/// A path in the estimator's normalized coordinates.
///
/// `mu = delta_f * tau` and `nu = (d / lambda) * sin(theta)`, both wrapped
/// into `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPath {
    pub gain: C64,
    pub mu: f64,
    pub nu: f64,
}

impl NormalizedPath {
    pub fn new(gain: C64, mu: f64, nu: f64) -> Self {
        Self {
            gain,
            mu: wrap_unit(mu),
            nu: wrap_unit(nu),
        }
    }

    /// Delay in seconds.
    pub fn delay(&self, cfg: &SystemConfig) -> f64 {
        self.mu / cfg.subcarrier_spacing
    }

    /// Map back to physical units. The ULA cannot tell front from back, so
    /// the returned angle lies in `(-pi/2, pi/2]`.
    pub fn denormalize(&self, cfg: &SystemConfig) -> Result<PathComponent> {
        // centre nu into (-0.5, 0.5]
        let centred = if self.nu > 0.5 { self.nu - 1.0 } else { self.nu };
        let sine = centred / cfg.d_over_lambda;
        if sine.abs() > 1.0 + 1e-12 {
            return Err(Error::NotPhysical {
                nu: self.nu,
                d_over_lambda: cfg.d_over_lambda,
            });
        }
        let mut angle = sine.clamp(-1.0, 1.0).asin();
        if angle <= -PI / 2.0 {
            angle = PI / 2.0;
        }
        Ok(PathComponent {
            gain: self.gain,
            delay: self.delay(cfg),
            angle,
        })
    }
}

/// Stacked `M * N` channel or pilot vector in subcarrier-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    antennas: usize,
    subcarriers: usize,
    data: Vec<C64>,
}

impl ChannelVector {
    pub fn zeros(cfg: &SystemConfig) -> Self {
        Self {
            antennas: cfg.antennas,
            subcarriers: cfg.subcarriers,
            data: vec![C64::new(0.0, 0.0); cfg.len()],
        }
    }

    pub fn from_vec(cfg: &SystemConfig, data: Vec<C64>) -> Result<Self> {
        if data.len() != cfg.len() {
            return Err(Error::DimensionMismatch {
                expected: cfg.len(),
                got: data.len(),
            });
        }
        Ok(Self {
            antennas: cfg.antennas,
            subcarriers: cfg.subcarriers,
            data,
        })
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    /// The `M` antenna samples of the subcarrier at row `row` (0-based).
    pub fn subcarrier_row(&self, row: usize) -> &[C64] {
        &self.data[row * self.antennas..(row + 1) * self.antennas]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: C64, other: &ChannelVector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// `self^H other`.
    pub fn inner(&self, other: &ChannelVector) -> C64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn distance_sqr(&self, other: &ChannelVector) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum()
    }

    fn check_shape(&self, other: &ChannelVector) -> Result<()> {
        if self.antennas != other.antennas || self.subcarriers != other.subcarriers {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(())
    }

    pub fn try_sub(&self, other: &ChannelVector) -> Result<ChannelVector> {
        self.check_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { data, ..*self })
    }

    pub fn try_add(&self, other: &ChannelVector) -> Result<ChannelVector> {
        self.check_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { data, ..*self })
    }
}

impl Index<usize> for ChannelVector {
    type Output = C64;

    fn index(&self, i: usize) -> &C64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for ChannelVector {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.data[i]
    }
}

/// ULA steering vector `a(nu)`: entry `m` is `exp(j 2 pi m nu)`.
pub fn steering_vector(cfg: &SystemConfig, nu: f64) -> Vec<C64> {
    let nu = wrap_unit(nu);
    cfg.antenna_indices()
        .map(|m| cis(2.0 * PI * m as f64 * nu))
        .collect()
}

/// OFDM delay phase vector `p(mu)`: entry `n` is `exp(j 2 pi n mu)`.
pub fn delay_vector(cfg: &SystemConfig, mu: f64) -> Vec<C64> {
    let mu = wrap_unit(mu);
    cfg.subcarrier_indices()
        .map(|n| cis(2.0 * PI * n as f64 * mu))
        .collect()
}

/// Dictionary atom `u(mu, nu) = p(mu) (x) a(nu)`.
pub fn atom(cfg: &SystemConfig, mu: f64, nu: f64) -> ChannelVector {
    let p = delay_vector(cfg, mu);
    let a = steering_vector(cfg, nu);
    let data = p
        .iter()
        .flat_map(|pn| a.iter().map(move |am| pn * am))
        .collect();
    ChannelVector {
        antennas: cfg.antennas,
        subcarriers: cfg.subcarriers,
        data,
    }
}

/// `out += gain * u(mu, nu)` without materializing the atom.
pub(crate) fn accumulate_atom(cfg: &SystemConfig, out: &mut ChannelVector, gain: C64, mu: f64, nu: f64) {
    let p = delay_vector(cfg, mu);
    let a = steering_vector(cfg, nu);
    let m = cfg.antennas;
    for (row, pn) in out.data.chunks_exact_mut(m).zip(&p) {
        let scaled = gain * pn;
        for (x, am) in row.iter_mut().zip(&a) {
            *x += scaled * am;
        }
    }
}

/// Sum of `gain * u(mu, nu)` over normalized paths.
pub fn synthesize_normalized(cfg: &SystemConfig, paths: &[NormalizedPath]) -> ChannelVector {
    let mut out = ChannelVector::zeros(cfg);
    for p in paths {
        accumulate_atom(cfg, &mut out, p.gain, p.mu, p.nu);
    }
    out
}

/// Downlink synthesis from normalized paths; the delay used for the carrier
/// offset phase is `mu / delta_f`.
pub fn synthesize_downlink_normalized(cfg: &SystemConfig, paths: &[NormalizedPath]) -> ChannelVector {
    let mut out = ChannelVector::zeros(cfg);
    for p in paths {
        let rot = cis(2.0 * PI * cfg.carrier_offset * p.delay(cfg));
        accumulate_atom(cfg, &mut out, p.gain * rot, p.mu, p.nu);
    }
    out
}

/// Stacked uplink channel `sum_l g_l p(tau_l) (x) a(theta_l)`.
pub fn synthesize_uplink(cfg: &SystemConfig, paths: &[PathComponent]) -> ChannelVector {
    let mut out = ChannelVector::zeros(cfg);
    for p in paths {
        let np = p.normalize(cfg);
        accumulate_atom(cfg, &mut out, p.gain, np.mu, np.nu);
    }
    out
}

/// Stacked downlink channel; each path picks up `exp(j 2 pi dF tau_l)`.
pub fn synthesize_downlink(cfg: &SystemConfig, paths: &[PathComponent]) -> ChannelVector {
    let mut out = ChannelVector::zeros(cfg);
    for p in paths {
        let np = p.normalize(cfg);
        let rot = cis(2.0 * PI * cfg.carrier_offset * p.delay);
        accumulate_atom(cfg, &mut out, p.gain * rot, np.mu, np.nu);
    }
    out
}

/// Single-antenna uplink channel across the `N` subcarriers.
pub fn synthesize_siso(cfg: &SystemConfig, paths: &[PathComponent]) -> Vec<C64> {
    let siso = SystemConfig { antennas: 1, ..*cfg };
    synthesize_uplink(&siso, paths).into_vec()
}

//! Trivariate Newtonized orthogonal matching pursuit.
//!
//! Each iteration detects one `(gain, mu, nu)` triple on an over-sampled
//! delay/angle grid, polishes it with Newton steps on the objective
//!
//! ```text
//! S(g, mu, nu) = 2 Re{ r^H g u(mu, nu) } - |g|^2 ||u(mu, nu)||^2
//! ```
//!
//! then cyclically re-refines every detected triple and finally re-solves all
//! gains jointly by least squares. The loop ends when the configured stopping
//! rule fires or the path cap is reached.
//!
//! Noise is assumed to have unit variance per complex sample; callers scale
//! the signal, not the noise.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::linalg::least_squares;
use crate::model::{accumulate_atom, delay_vector, steering_vector, wrap_unit, wrapped_distance};
use crate::{ChannelVector, Error, NormalizedPath, Result, SystemConfig, C64};

/// Two detections closer than this in both coordinates are duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

/// Hard upper bound for the default path cap.
const MAX_PATHS_CEILING: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StoppingRule {
    /// Stop once the residual energy drops below the expected noise energy `M N`.
    Power,
    /// Stop once every DFT-grid matched-filter output is below the
    /// false-alarm threshold for probability `p_fa`.
    FalseAlarm { p_fa: f64 },
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StoppingRule::Power => Ok(()),
            StoppingRule::FalseAlarm { p_fa } if p_fa > 0.0 && p_fa < 1.0 => Ok(()),
            StoppingRule::FalseAlarm { p_fa } => Err(Error::InvalidConfig(format!(
                "false-alarm probability must lie in (0, 1), got {p_fa}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NompConfig {
    /// Delay grid over-sampling `gamma_1`.
    pub oversampling_delay: usize,
    /// Angle grid over-sampling `gamma_2`.
    pub oversampling_angle: usize,
    pub single_refine_rounds: usize,
    pub cyclic_refine_rounds: usize,
    /// Cap on detected paths; `None` means `min(M N / 4, 64)`.
    pub max_paths: Option<usize>,
    pub stopping: StoppingRule,
}

impl Default for NompConfig {
    fn default() -> Self {
        Self {
            oversampling_delay: 2,
            oversampling_angle: 4,
            single_refine_rounds: 1,
            cyclic_refine_rounds: 3,
            max_paths: None,
            stopping: StoppingRule::Power,
        }
    }
}

impl NompConfig {
    pub fn with_oversampling(mut self, delay: usize, angle: usize) -> Self {
        self.oversampling_delay = delay;
        self.oversampling_angle = angle;
        self
    }

    pub fn with_stopping(mut self, stopping: StoppingRule) -> Self {
        self.stopping = stopping;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.oversampling_delay == 0 || self.oversampling_angle == 0 {
            return Err(Error::InvalidConfig("over-sampling rates must be >= 1".into()));
        }
        if self.max_paths == Some(0) {
            return Err(Error::InvalidConfig("max_paths must be >= 1".into()));
        }
        self.stopping.validate()
    }

    pub fn effective_max_paths(&self, cfg: &SystemConfig) -> usize {
        self.max_paths
            .unwrap_or_else(|| (cfg.len() / 4).clamp(1, MAX_PATHS_CEILING))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Criterion,
    MaxPaths,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NompResult {
    /// Detected paths in detection order with their final LS gains.
    pub paths: Vec<NormalizedPath>,
    pub residual_energy: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// Residual energy before the first and after every iteration.
    pub residual_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseDetection {
    pub mu: f64,
    pub nu: f64,
    /// `|u^H r|^2 / ||u||^2` at the selected grid point.
    pub score: f64,
    pub k_delay: usize,
    pub k_angle: usize,
}

/// Outcome of one guarded Newton step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStep {
    pub gain: C64,
    pub mu: f64,
    pub nu: f64,
    pub applied: bool,
}

/// Gradient and Hessian of `S` with respect to `(mu, nu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveDerivatives {
    pub gradient: [f64; 2],
    pub hessian: [[f64; 2]; 2],
}

fn check_len(cfg: &SystemConfig, v: &ChannelVector) -> Result<()> {
    if v.len() != cfg.len() || v.antennas() != cfg.antennas {
        return Err(Error::DimensionMismatch {
            expected: cfg.len(),
            got: v.len(),
        });
    }
    Ok(())
}

/// `u(mu, nu)^H r`, evaluated separably.
pub fn atom_correlation(cfg: &SystemConfig, residual: &ChannelVector, mu: f64, nu: f64) -> C64 {
    let p = delay_vector(cfg, mu);
    let a = steering_vector(cfg, nu);
    let m = cfg.antennas;
    residual
        .as_slice()
        .chunks_exact(m)
        .zip(&p)
        .map(|(row, pn)| {
            let s: C64 = row.iter().zip(&a).map(|(x, am)| am.conj() * x).sum();
            pn.conj() * s
        })
        .sum()
}

/// `S(g, mu, nu) = 2 Re{r^H g u} - |g|^2 ||u||^2`.
pub fn objective(cfg: &SystemConfig, residual: &ChannelVector, gain: C64, mu: f64, nu: f64) -> f64 {
    let c = atom_correlation(cfg, residual, mu, nu);
    // r^H g u = g * conj(u^H r)
    2.0 * (gain * c.conj()).re - gain.norm_sqr() * cfg.len() as f64
}

/// LS gain of a single atom: `u^H r / ||u||^2`.
pub fn ls_gain_single(cfg: &SystemConfig, residual: &ChannelVector, mu: f64, nu: f64) -> C64 {
    atom_correlation(cfg, residual, mu, nu) / cfg.len() as f64
}

/// Closed-form first and second partials of `S`.
pub fn objective_derivatives(
    cfg: &SystemConfig,
    residual: &ChannelVector,
    gain: C64,
    mu: f64,
    nu: f64,
) -> ObjectiveDerivatives {
    let p = delay_vector(cfg, mu);
    let a = steering_vector(cfg, nu);
    let ns: Vec<f64> = cfg.subcarrier_indices().map(|n| n as f64).collect();
    let ms: Vec<f64> = cfg.antenna_indices().map(|m| m as f64).collect();

    // moments of w = conj(r - g u) * u weighted by 1, n, m, n^2, n m, m^2
    let (mut s_n, mut s_m) = (C64::default(), C64::default());
    let (mut s_nn, mut s_nm, mut s_mm) = (C64::default(), C64::default(), C64::default());
    for ((row, pn), &n) in residual.as_slice().chunks_exact(cfg.antennas).zip(&p).zip(&ns) {
        let (mut r0, mut r1, mut r2) = (C64::default(), C64::default(), C64::default());
        for ((x, am), &m) in row.iter().zip(&a).zip(&ms) {
            let u = pn * am;
            let w = (x - gain * u).conj() * u;
            r0 += w;
            r1 += w * m;
            r2 += w * (m * m);
        }
        s_n += r0 * n;
        s_m += r1;
        s_nn += r0 * (n * n);
        s_nm += r1 * n;
        s_mm += r2;
    }

    let sum_n: f64 = ns.iter().sum();
    let sum_m: f64 = ms.iter().sum();
    let sum_nn: f64 = ns.iter().map(|n| n * n).sum();
    let sum_mm: f64 = ms.iter().map(|m| m * m).sum();
    let (big_m, big_n) = (cfg.antennas as f64, cfg.subcarriers as f64);

    let j2pi = C64::new(0.0, 2.0 * PI);
    let four_pi2 = 4.0 * PI * PI;
    let g2 = gain.norm_sqr();

    let grad_mu = 2.0 * (gain * j2pi * s_n).re;
    let grad_nu = 2.0 * (gain * j2pi * s_m).re;
    let h_mumu = 2.0 * (gain * -four_pi2 * s_nn).re - 2.0 * g2 * four_pi2 * big_m * sum_nn;
    let h_nunu = 2.0 * (gain * -four_pi2 * s_mm).re - 2.0 * g2 * four_pi2 * big_n * sum_mm;
    let h_munu = 2.0 * (gain * -four_pi2 * s_nm).re - 2.0 * g2 * four_pi2 * sum_n * sum_m;

    ObjectiveDerivatives {
        gradient: [grad_mu, grad_nu],
        hessian: [[h_mumu, h_munu], [h_munu, h_nunu]],
    }
}

/// One Newton step on `S` in `(mu, nu)`.
///
/// The step is taken only when the Hessian is negative definite
/// (`det > 0` and `H[0][0] < 0`) and the refreshed single-atom LS fit does not
/// leave more residual energy than the input triple did. On acceptance the
/// coordinates are wrapped into `[0, 1)` and the gain is re-fit.
pub fn newton_refine(
    cfg: &SystemConfig,
    residual: &ChannelVector,
    gain: C64,
    mu: f64,
    nu: f64,
) -> NewtonStep {
    let unchanged = NewtonStep {
        gain,
        mu,
        nu,
        applied: false,
    };
    let d = objective_derivatives(cfg, residual, gain, mu, nu);
    let [[h11, h12], [_, h22]] = d.hessian;
    let det = h11 * h22 - h12 * h12;
    if !(det > 0.0 && h11 < 0.0) {
        return unchanged;
    }
    let [g1, g2] = d.gradient;
    let step_mu = -(h22 * g1 - h12 * g2) / det;
    let step_nu = -(-h12 * g1 + h11 * g2) / det;
    if !(step_mu.is_finite() && step_nu.is_finite()) {
        return unchanged;
    }
    let new_mu = wrap_unit(mu + step_mu);
    let new_nu = wrap_unit(nu + step_nu);

    let mn = cfg.len() as f64;
    let c_old = atom_correlation(cfg, residual, mu, nu);
    let c_new = atom_correlation(cfg, residual, new_mu, new_nu);
    // residual energy is ||r||^2 minus these
    let gain_old = 2.0 * (gain.conj() * c_old).re - gain.norm_sqr() * mn;
    let gain_new = c_new.norm_sqr() / mn;
    if gain_new < gain_old {
        return unchanged;
    }
    NewtonStep {
        gain: c_new / mn,
        mu: new_mu,
        nu: new_nu,
        applied: true,
    }
}

/// Over-sampled delay/angle grid evaluated with a zero-padded 2-D FFT.
pub struct GridSearch {
    subcarriers: usize,
    antennas: usize,
    delay_points: usize,
    angle_points: usize,
    delay_fft: Arc<dyn Fft<f64>>,
    angle_fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GridSearch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridSearch")
            .field("delay_points", &self.delay_points)
            .field("angle_points", &self.angle_points)
            .finish()
    }
}

impl GridSearch {
    pub fn new(cfg: &SystemConfig, oversampling_delay: usize, oversampling_angle: usize) -> Self {
        let delay_points = oversampling_delay * cfg.subcarriers;
        let angle_points = oversampling_angle * cfg.antennas;
        let mut planner = FftPlanner::new();
        Self {
            subcarriers: cfg.subcarriers,
            antennas: cfg.antennas,
            delay_points,
            angle_points,
            delay_fft: planner.plan_fft_forward(delay_points),
            angle_fft: planner.plan_fft_forward(angle_points),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.delay_points, self.angle_points)
    }

    /// `|u^H r|^2 / ||u||^2` at every grid point, delay-major.
    pub fn spectrum(&self, residual: &ChannelVector) -> Vec<f64> {
        let (p1, p2) = (self.delay_points, self.angle_points);
        let (n, m) = (self.subcarriers, self.antennas);
        let zero = C64::new(0.0, 0.0);

        // angle transform of each subcarrier row
        let mut rows = vec![zero; n * p2];
        for (i, out) in rows.chunks_exact_mut(p2).enumerate() {
            out[..m].copy_from_slice(residual.subcarrier_row(i));
        }
        self.angle_fft.process(&mut rows);

        let norm = (n * m) as f64;
        let mut spec = vec![0.0; p1 * p2];
        let mut column = vec![zero; p1];
        for k2 in 0..p2 {
            column.iter_mut().for_each(|z| *z = zero);
            for i in 0..n {
                column[i] = rows[i * p2 + k2];
            }
            self.delay_fft.process(&mut column);
            for (k1, z) in column.iter().enumerate() {
                spec[k1 * p2 + k2] = z.norm_sqr() / norm;
            }
        }
        spec
    }

    /// Arg-max over the grid; ties go to the lexicographically smallest
    /// `(k_delay, k_angle)`.
    pub fn detect(&self, residual: &ChannelVector) -> CoarseDetection {
        let spec = self.spectrum(residual);
        let mut best = 0;
        for (i, &v) in spec.iter().enumerate() {
            if v > spec[best] {
                best = i;
            }
        }
        let (k1, k2) = (best / self.angle_points, best % self.angle_points);
        CoarseDetection {
            mu: k1 as f64 / self.delay_points as f64,
            nu: k2 as f64 / self.angle_points as f64,
            score: spec[best],
            k_delay: k1,
            k_angle: k2,
        }
    }

    pub fn max_score(&self, residual: &ChannelVector) -> f64 {
        self.spectrum(residual).into_iter().fold(0.0, f64::max)
    }
}

/// Coarse grid detection on the `gamma_1 N x gamma_2 M` grid.
pub fn coarse_detect(cfg: &SystemConfig, residual: &ChannelVector, nomp: &NompConfig) -> CoarseDetection {
    GridSearch::new(cfg, nomp.oversampling_delay, nomp.oversampling_angle).detect(residual)
}

/// Power-based stopping test: `||r||^2 < M N`.
pub fn stopping_power(cfg: &SystemConfig, residual: &ChannelVector) -> bool {
    residual.norm_sqr() < cfg.len() as f64
}

/// Threshold `ln(M N) - ln(-ln(1 - p_fa))` on the per-atom matched-filter
/// energy.
pub fn false_alarm_threshold(mn: usize, p_fa: f64) -> f64 {
    (mn as f64).ln() - (-(-p_fa).ln_1p()).ln()
}

/// False-alarm stopping test: every DFT-grid statistic `|u^H r|^2 / (M N)`
/// is below the threshold.
pub fn stopping_false_alarm(cfg: &SystemConfig, residual: &ChannelVector, p_fa: f64) -> bool {
    let grid = GridSearch::new(cfg, 1, 1);
    grid.max_score(residual) < false_alarm_threshold(cfg.len(), p_fa)
}

fn duplicate_pair(paths: &[NormalizedPath]) -> Option<(usize, usize)> {
    for j in 1..paths.len() {
        for i in 0..j {
            if is_duplicate(&paths[i], &paths[j]) {
                return Some((i, j));
            }
        }
    }
    None
}

fn is_duplicate(a: &NormalizedPath, b: &NormalizedPath) -> bool {
    wrapped_distance(a.mu, b.mu) < DUPLICATE_TOLERANCE && wrapped_distance(a.nu, b.nu) < DUPLICATE_TOLERANCE
}

/// Drop every path that duplicates an earlier one.
pub fn drop_duplicates(paths: &mut Vec<NormalizedPath>) -> usize {
    let before = paths.len();
    let mut kept: Vec<NormalizedPath> = Vec::with_capacity(before);
    for p in paths.drain(..) {
        if !kept.iter().any(|k| is_duplicate(k, &p)) {
            kept.push(p);
        }
    }
    *paths = kept;
    before - paths.len()
}

/// Atom matrix `U = [u(mu_0, nu_0) ... u(mu_L-1, nu_L-1)]`.
pub fn atom_matrix(cfg: &SystemConfig, paths: &[NormalizedPath]) -> DMatrix<C64> {
    let mut u = DMatrix::zeros(cfg.len(), paths.len());
    for (l, p) in paths.iter().enumerate() {
        let mut col = ChannelVector::zeros(cfg);
        accumulate_atom(cfg, &mut col, C64::new(1.0, 0.0), p.mu, p.nu);
        u.column_mut(l).copy_from_slice(col.as_slice());
    }
    u
}

/// Re-solve all gains jointly: `g = U^+ y` via QR.
pub fn update_all_gains(
    cfg: &SystemConfig,
    y: &ChannelVector,
    paths: &[NormalizedPath],
) -> Result<Vec<NormalizedPath>> {
    check_len(cfg, y)?;
    if let Some((i, j)) = duplicate_pair(paths) {
        return Err(Error::RankDeficient {
            rows: cfg.len(),
            cols: paths.len(),
            reason: format!("paths {i} and {j} coincide"),
        });
    }
    let u = atom_matrix(cfg, paths);
    let gains = least_squares(&u, &DVector::from_column_slice(y.as_slice()))?;
    Ok(paths
        .iter()
        .zip(gains.iter())
        .map(|(p, g)| NormalizedPath { gain: *g, ..*p })
        .collect())
}

/// `y - sum_l g_l u(mu_l, nu_l)`.
pub fn residual_of(cfg: &SystemConfig, y: &ChannelVector, paths: &[NormalizedPath]) -> ChannelVector {
    let mut r = y.clone();
    for p in paths {
        accumulate_atom(cfg, &mut r, -p.gain, p.mu, p.nu);
    }
    r
}

/// Cyclic refinement operating on a live residual `y - sum g u`.
fn cyclic_refine_in_place(
    cfg: &SystemConfig,
    residual: &mut ChannelVector,
    paths: &mut [NormalizedPath],
    rounds: usize,
) {
    for _ in 0..rounds {
        for p in paths.iter_mut() {
            accumulate_atom(cfg, residual, p.gain, p.mu, p.nu);
            let step = newton_refine(cfg, residual, p.gain, p.mu, p.nu);
            if step.applied {
                *p = NormalizedPath {
                    gain: step.gain,
                    mu: step.mu,
                    nu: step.nu,
                };
            }
            accumulate_atom(cfg, residual, -p.gain, p.mu, p.nu);
        }
    }
}

/// Newton-refine every path in detection order, `rounds` times.
pub fn cyclic_refine(
    cfg: &SystemConfig,
    y: &ChannelVector,
    paths: &[NormalizedPath],
    rounds: usize,
) -> Result<Vec<NormalizedPath>> {
    check_len(cfg, y)?;
    let mut out = paths.to_vec();
    let mut residual = residual_of(cfg, y, &out);
    cyclic_refine_in_place(cfg, &mut residual, &mut out, rounds);
    Ok(out)
}

fn should_stop(cfg: &SystemConfig, residual: &ChannelVector, rule: StoppingRule, dft_grid: &GridSearch) -> bool {
    match rule {
        StoppingRule::Power => stopping_power(cfg, residual),
        StoppingRule::FalseAlarm { p_fa } => {
            dft_grid.max_score(residual) < false_alarm_threshold(cfg.len(), p_fa)
        }
    }
}

/// Run the full pursuit on the stacked observation `y`.
pub fn nomp_extract(cfg: &SystemConfig, y: &ChannelVector, nomp: &NompConfig) -> Result<NompResult> {
    cfg.validate()?;
    nomp.validate()?;
    check_len(cfg, y)?;

    let grid = GridSearch::new(cfg, nomp.oversampling_delay, nomp.oversampling_angle);
    let dft_grid = GridSearch::new(cfg, 1, 1);
    let max_paths = nomp.effective_max_paths(cfg);

    let mut paths: Vec<NormalizedPath> = Vec::new();
    let mut residual = y.clone();
    let mut trace = vec![residual.norm_sqr()];
    let mut iterations = 0;

    let stop_reason = loop {
        if should_stop(cfg, &residual, nomp.stopping, &dft_grid) {
            break StopReason::Criterion;
        }
        if paths.len() >= max_paths || iterations >= max_paths {
            break StopReason::MaxPaths;
        }
        iterations += 1;

        // new detection
        let coarse = grid.detect(&residual);
        let mut cand = NormalizedPath {
            gain: ls_gain_single(cfg, &residual, coarse.mu, coarse.nu),
            mu: coarse.mu,
            nu: coarse.nu,
        };
        // single refinement
        for _ in 0..nomp.single_refine_rounds {
            let step = newton_refine(cfg, &residual, cand.gain, cand.mu, cand.nu);
            if step.applied {
                cand = NormalizedPath {
                    gain: step.gain,
                    mu: step.mu,
                    nu: step.nu,
                };
            }
        }
        accumulate_atom(cfg, &mut residual, -cand.gain, cand.mu, cand.nu);
        paths.push(cand);

        cyclic_refine_in_place(cfg, &mut residual, &mut paths, nomp.cyclic_refine_rounds);

        let dropped = drop_duplicates(&mut paths);
        if dropped > 0 {
            log::debug!("dropped {dropped} duplicate detection(s)");
        }
        if !paths.is_empty() {
            paths = update_all_gains(cfg, y, &paths)?;
        }
        residual = residual_of(cfg, y, &paths);
        trace.push(residual.norm_sqr());
    };

    Ok(NompResult {
        residual_energy: residual.norm_sqr(),
        paths,
        iterations,
        stop_reason,
        residual_trace: trace,
    })
}

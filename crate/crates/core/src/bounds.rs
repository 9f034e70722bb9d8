//! Single-path Fisher information and Cramer-Rao bounds for `(mu, nu)`.
//!
//! The matrices here are indexed `[angle, delay]`: row/column 0 belongs to
//! `nu`, row/column 1 to `mu`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `2 |g|^2 pi^2 M N (X^2 - 1) / 3` for `X = M` or `X = N`.
fn information(m: usize, n: usize, gain_sqr: f64, x: usize) -> f64 {
    let (mf, nf, xf) = (m as f64, n as f64, x as f64);
    2.0 * gain_sqr * PI * PI * mf * nf * (xf * xf - 1.0) / 3.0
}

/// Fisher information of `(nu, mu)` for one path with gain magnitude
/// squared `gain_sqr` under unit noise.
pub fn fisher_matrix(antennas: usize, subcarriers: usize, gain_sqr: f64) -> [[f64; 2]; 2] {
    [
        [information(antennas, subcarriers, gain_sqr, antennas), 0.0],
        [0.0, information(antennas, subcarriers, gain_sqr, subcarriers)],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    pub fisher: [[f64; 2]; 2],
    pub crb_mu: f64,
    pub crb_nu: f64,
    /// Lower bound on `N^2 E|mu - mu_hat|^2`.
    pub eps_mu_bound: f64,
    /// Lower bound on `M^2 E|nu - nu_hat|^2`.
    pub eps_nu_bound: f64,
    /// Common large-array value `3 / (2 snr pi^2 M N)` of both bounds.
    pub large_array_limit: f64,
    pub snr: f64,
    /// Set when `M = 1`: the angle is unidentifiable and its bound is `+inf`.
    pub angle_degenerate: bool,
    /// Set when `N = 1`: the delay is unidentifiable and its bound is `+inf`.
    pub delay_degenerate: bool,
}

/// Cramer-Rao bounds for a single path at linear `snr = |g|^2`.
pub fn crb(antennas: usize, subcarriers: usize, snr: f64) -> Result<CrbReport> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::InvalidConfig(format!("snr must be positive and finite, got {snr}")));
    }
    if antennas == 0 || subcarriers == 0 || antennas * subcarriers < 2 {
        return Err(Error::InvalidConfig(format!(
            "bounds need M N > 1, got M = {antennas}, N = {subcarriers}"
        )));
    }
    let fisher = fisher_matrix(antennas, subcarriers, snr);
    let invert = |f: f64| if f > 0.0 { 1.0 / f } else { f64::INFINITY };
    let crb_nu = invert(fisher[0][0]);
    let crb_mu = invert(fisher[1][1]);
    let (mf, nf) = (antennas as f64, subcarriers as f64);
    Ok(CrbReport {
        fisher,
        crb_mu,
        crb_nu,
        eps_mu_bound: nf * nf * crb_mu,
        eps_nu_bound: mf * mf * crb_nu,
        large_array_limit: 3.0 / (snr * 2.0 * PI * PI * mf * nf),
        snr,
        angle_degenerate: antennas == 1,
        delay_degenerate: subcarriers == 1,
    })
}

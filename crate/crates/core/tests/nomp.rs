mod common;

use fdd_recon::harness::{add_noise, match_paths, trial_rng};
use fdd_recon::model::{synthesize_normalized, wrapped_distance};
use fdd_recon::nomp::{
    ls_gain_single, newton_refine, nomp_extract, objective, stopping_false_alarm, stopping_power, update_all_gains,
    NompConfig, StoppingRule,
};
use fdd_recon::{ChannelVector, NormalizedPath, SystemConfig, C64};
use proptest::prelude::*;
use rand::Rng;

use common::{brute_atom, cgauss, normal_equations_ls, rel_err, Mat};

fn brute_residual(cfg: &SystemConfig, y: &ChannelVector, paths: &[NormalizedPath]) -> Vec<C64> {
    let mut r = y.as_slice().to_vec();
    for p in paths {
        for (ri, ui) in r.iter_mut().zip(brute_atom(cfg.antennas, cfg.subcarriers, p.mu, p.nu)) {
            *ri -= p.gain * ui;
        }
    }
    r
}

fn energy(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn random_vector<R: Rng>(cfg: &SystemConfig, rng: &mut R) -> ChannelVector {
    ChannelVector::from_vec(cfg, (0..cfg.len()).map(|_| cgauss(rng)).collect()).unwrap()
}

/// Paths with at least two grid cells between them in both coordinates.
fn separated(m: usize, n: usize, raw: &[(f64, f64, f64, f64)]) -> Vec<NormalizedPath> {
    let mut out: Vec<NormalizedPath> = Vec::new();
    for &(amp, ph, mu, nu) in raw {
        let cand = NormalizedPath::new(C64::from_polar(amp, ph), mu, nu);
        if out
            .iter()
            .all(|p| wrapped_distance(p.mu, cand.mu) >= 2.0 / n as f64 && wrapped_distance(p.nu, cand.nu) >= 2.0 / m as f64)
        {
            out.push(cand);
        }
    }
    out
}

fn raw_paths() -> impl Strategy<Value = Vec<(f64, f64, f64, f64)>> {
    prop::collection::vec((0.5..2.0f64, 0.0..std::f64::consts::TAU, 0.0..1.0f64, 0.0..1.0f64), 1..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn noiseless_paths_are_recovered(m in 16usize..=20, n in 16usize..=32, raw in raw_paths()) {
        let cfg = SystemConfig::new(m, n);
        let truth = separated(m, n, &raw);
        let y = synthesize_normalized(&cfg, &truth);
        let nomp = NompConfig {
            cyclic_refine_rounds: 12,
            ..NompConfig::default().with_stopping(StoppingRule::FalseAlarm { p_fa: 0.01 })
        };
        let res = nomp_extract(&cfg, &y, &nomp).unwrap();
        let matching = match_paths(&cfg, &truth, &res.paths);
        prop_assert_eq!(matching.missed, 0);
        prop_assert_eq!(matching.false_alarms, 0);
        for (_, _, dmu, dnu) in matching.pairs {
            prop_assert!(dmu.abs() * n as f64 <= 1e-6 && dnu.abs() * m as f64 <= 1e-6);
        }
        prop_assert!(res.residual_energy <= 1e-12 * cfg.len() as f64);
    }

    #[test]
    fn reported_residual_is_recomputable(m in 2usize..10, n in 4usize..24, raw in raw_paths(), seed in any::<u64>()) {
        let cfg = SystemConfig::new(m, n);
        let truth: Vec<NormalizedPath> = raw.iter().map(|&(a, p, mu, nu)| NormalizedPath::new(C64::from_polar(3.0 * a, p), mu, nu)).collect();
        let mut y = synthesize_normalized(&cfg, &truth);
        add_noise(&mut y, 1.0, &mut trial_rng(seed, 0));
        let res = nomp_extract(&cfg, &y, &NompConfig::default()).unwrap();
        let brute = energy(&brute_residual(&cfg, &y, &res.paths));
        prop_assert!((res.residual_energy - brute).abs() <= 1e-9 * brute.max(1e-300));
        prop_assert!(res.paths.len() <= NompConfig::default().effective_max_paths(&cfg));
        prop_assert_eq!(res.residual_trace.len(), res.iterations + 1);
        for w in res.residual_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "trace {:?}", res.residual_trace);
        }
    }

    #[test]
    fn objective_is_energy_reduction(m in 1usize..8, n in 1usize..16, seed in any::<u64>(), mu in 0.0..1.0f64, nu in 0.0..1.0f64) {
        let cfg = SystemConfig::new(m, n);
        let mut rng = trial_rng(seed, 1);
        let r = random_vector(&cfg, &mut rng);
        let g = cgauss(&mut rng);
        let after = brute_residual(&cfg, &r, &[NormalizedPath { gain: g, mu, nu }]);
        let expected = energy(r.as_slice()) - energy(&after);
        let got = objective(&cfg, &r, g, mu, nu);
        prop_assert!((got - expected).abs() <= 1e-9 * energy(r.as_slice()));
    }

    #[test]
    fn single_gain_minimizes_residual(m in 1usize..8, n in 1usize..16, seed in any::<u64>(), mu in 0.0..1.0f64, nu in 0.0..1.0f64) {
        let cfg = SystemConfig::new(m, n);
        let mut rng = trial_rng(seed, 2);
        let r = random_vector(&cfg, &mut rng);
        let g = ls_gain_single(&cfg, &r, mu, nu);
        let at = |gain: C64| energy(&brute_residual(&cfg, &r, &[NormalizedPath { gain, mu, nu }]));
        let best = at(g);
        for k in 0..16 {
            let dir = C64::from_polar(1.0, k as f64 * std::f64::consts::TAU / 16.0);
            for step in [1e-3, 1e-1, 1.0] {
                prop_assert!(at(g + dir * step) >= best - 1e-9 * best.max(1.0));
            }
        }
    }

    #[test]
    fn accepted_newton_step_never_increases_energy(m in 2usize..10, n in 2usize..20, seed in any::<u64>()) {
        let cfg = SystemConfig::new(m, n);
        let mut rng = trial_rng(seed, 3);
        let truth = NormalizedPath::new(C64::from_polar(2.0, rng.random_range(0.0..6.0)), rng.random(), rng.random());
        let mut r = synthesize_normalized(&cfg, &[truth]);
        add_noise(&mut r, 0.5, &mut rng);
        let mu = truth.mu + rng.random_range(-0.5..0.5) / n as f64;
        let nu = truth.nu + rng.random_range(-0.5..0.5) / m as f64;
        let g = ls_gain_single(&cfg, &r, mu, nu);
        let before = energy(&brute_residual(&cfg, &r, &[NormalizedPath { gain: g, mu, nu }]));
        let step = newton_refine(&cfg, &r, g, mu, nu);
        let after = energy(&brute_residual(&cfg, &r, &[NormalizedPath { gain: step.gain, mu: step.mu, nu: step.nu }]));
        prop_assert!(after <= before * (1.0 + 1e-12));
        if !step.applied {
            prop_assert_eq!((step.gain, step.mu, step.nu), (g, mu, nu));
        }
    }
}

#[test]
fn joint_gains_match_normal_equations() {
    let cfg = SystemConfig::new(4, 16);
    let mut rng = trial_rng(11, 0);
    for _ in 0..20 {
        let paths = vec![
            NormalizedPath::new(cgauss(&mut rng), 1.0 / 16.0, 0.0),
            NormalizedPath::new(cgauss(&mut rng), 5.0 / 16.0, 0.25),
            NormalizedPath::new(cgauss(&mut rng), 11.0 / 16.0, 0.75),
        ];
        let mut y = synthesize_normalized(&cfg, &paths);
        add_noise(&mut y, 0.3, &mut rng);
        let fitted = update_all_gains(&cfg, &y, &paths).unwrap();
        let mut a = Mat::zeros(cfg.len(), paths.len());
        for (l, p) in paths.iter().enumerate() {
            for (i, v) in brute_atom(4, 16, p.mu, p.nu).into_iter().enumerate() {
                a.set(i, l, v);
            }
        }
        let oracle = normal_equations_ls(&a, y.as_slice());
        let got: Vec<C64> = fitted.iter().map(|p| p.gain).collect();
        assert!(rel_err(&got, &oracle) <= 1e-7);
        // the fitted residual is orthogonal to every atom
        let r = brute_residual(&cfg, &y, &fitted);
        for l in 0..paths.len() {
            let c: C64 = (0..cfg.len()).map(|i| a.at(i, l).conj() * r[i]).sum();
            assert!(c.norm() <= 1e-9 * energy(y.as_slice()).sqrt());
        }
    }
}

#[test]
fn power_rule_on_noise_is_a_coin_flip() {
    let cfg = SystemConfig::new(4, 16);
    let draws = 10_000;
    let hits = (0..draws)
        .filter(|&t| {
            let mut r = ChannelVector::zeros(&cfg);
            add_noise(&mut r, 1.0, &mut trial_rng(5, t));
            stopping_power(&cfg, &r)
        })
        .count();
    let p = hits as f64 / draws as f64;
    assert!((p - 0.5).abs() <= 0.05, "empirical probability {p}");
}

#[test]
fn false_alarm_rule_is_calibrated() {
    let cfg = SystemConfig::new(16, 64);
    let trials = 2000;
    let alarms = (0..trials)
        .filter(|&t| {
            let mut r = ChannelVector::zeros(&cfg);
            add_noise(&mut r, 1.0, &mut trial_rng(6, t));
            !stopping_false_alarm(&cfg, &r, 0.05)
        })
        .count();
    let rate = alarms as f64 / trials as f64;
    assert!((rate - 0.05).abs() <= 0.03, "fake-detection rate {rate}");
}

#[test]
fn pursuit_on_noise_usually_finds_nothing() {
    let cfg = SystemConfig::new(8, 32);
    let nomp = NompConfig::default().with_stopping(StoppingRule::FalseAlarm { p_fa: 0.05 });
    let trials = 400;
    let empty = (0..trials)
        .filter(|&t| {
            let mut y = ChannelVector::zeros(&cfg);
            add_noise(&mut y, 1.0, &mut trial_rng(7, t));
            nomp_extract(&cfg, &y, &nomp).unwrap().paths.is_empty()
        })
        .count();
    let rate = empty as f64 / trials as f64;
    assert!((rate - 0.95).abs() <= 0.03, "empty rate {rate}");
}

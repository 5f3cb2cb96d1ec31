mod common;

use chrono::NaiveDate;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use turnover::marketdata::{generate_synthetic_panel, GeneratorConfig};
use turnover::volatility::*;

use common::simulate_garch;


#[test]
fn garch_recovers_persistence() {
    let r = simulate_garch(1e-5, 0.08, 0.90, 5000, 42);
    let fit = fit_garch(&r).unwrap();
    assert!(!fit.fallback);
    let p = fit.params.persistence();
    assert!((p - 0.98).abs() < 0.05, "persistence {p}");
    assert!(p < 1.0);
    assert!(fit.variance.iter().all(|&v| v > 0.0));
    assert_eq!(fit.variance.len(), r.len() + 1);
}

#[test]
fn garch_zero_returns_degenerate() {
    let r = vec![0.0; 200];
    assert!(matches!(fit_garch(&r), Err(VolError::Degenerate(_))));
    let fb = fit_garch_or_fallback(&r, None);
    assert!(fb.fallback);
    assert!(fb.variance.iter().all(|&v| v > 0.0));
}

#[test]
fn garch_errors() {
    assert!(matches!(fit_garch(&[0.01; 50]), Err(VolError::InsufficientData { .. })));
    let mut r = simulate_garch(1e-5, 0.05, 0.9, 150, 1);
    r[3] = f64::NAN;
    assert!(matches!(fit_garch(&r), Err(VolError::Data(_))));
}

#[test]
fn garch_f32_instantiation() {
    let r: Vec<f32> = simulate_garch(1e-5, 0.08, 0.9, 800, 5).into_iter().map(|x| x as f32).collect();
    let fit = fit_garch(&r).unwrap();
    assert!(fit.params.persistence() < 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn garch_constraints_hold(seed in 0u64..10_000, a in 0.0f64..0.2, b in 0.5f64..0.79) {
        let r = simulate_garch(2e-5, a, b, 300, seed);
        let fit = fit_garch(&r).unwrap();
        prop_assert!(fit.params.alpha >= 0.0 && fit.params.beta >= 0.0 && fit.params.omega > 0.0);
        prop_assert!(fit.params.persistence() <= MAX_PERSISTENCE + 1e-12);
        prop_assert!(fit.variance.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn realized_vol_homogeneous(r in prop::collection::vec(-0.1f64..0.1, 2..60), c in -5.0f64..5.0) {
        let w = r.len();
        let base = realized_vol(&r, w).unwrap();
        let scaled: Vec<f64> = r.iter().map(|x| x * c).collect();
        let s = realized_vol(&scaled, w).unwrap();
        prop_assert!((s - c * c * base).abs() <= 1e-12 * (1.0 + s.abs()));
    }

    #[test]
    fn combination_is_convex(xs in prop::collection::vec((1e-5f64..1e-2, 1e-5f64..1e-2, 1e-5f64..1e-2, 0.0f64..5e-3), 1..80)) {
        let forecasts: Vec<[f64; 3]> = xs.iter().map(|&(a, b, c, _)| [a, b, c]).collect();
        let next: Vec<Option<f64>> = xs.iter().map(|&(_, _, _, y)| Some(y)).collect();
        let out = combine_vols(&forecasts, &next, &KalmanConfig::default());
        for (c, x) in out.iter().zip(&forecasts) {
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(c.value >= lo - 1e-15 && c.value <= hi + 1e-15);
            prop_assert!((c.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(c.weights.iter().all(|&w| w >= 0.0));
        }
    }
}

#[test]
fn realized_vol_examples() {
    assert_eq!(realized_vol(&[0.03; 10], 10), Some(0.03 * 0.03));
    assert!((realized_vol::<f64>(&[0.01, -0.01], 2).unwrap() - 1e-4).abs() < 1e-18);
    assert_eq!(realized_vol(&[0.01], 2), None);
    assert_eq!(realized_vol(&[0.01, 0.02], 1), None);
}

#[test]
fn sv_tracks_constant_volatility() {
    let sigma: f64 = 0.02;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let r: Vec<f64> = (0..1500).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let cfg = SvConfig { n_particles: 500, rho: 0.97, eta: 0.02 };
    let path = particle_filter_sv(&r, &cfg, Some((sigma * sigma).ln()), 3).unwrap();
    for &v in &path.variance[200..] {
        assert!((v / (sigma * sigma) - 1.0).abs() < 0.2, "{v}");
    }
    // estimated level
    let path2 = particle_filter_sv(&r, &cfg, None, 3).unwrap();
    let tail_mean: f64 = path2.variance[200..].iter().sum::<f64>() / 1300.0;
    assert!((tail_mean / (sigma * sigma) - 1.0).abs() < 0.2);
}

#[test]
fn sv_deterministic_and_resets_ess() {
    let r = simulate_garch(1e-5, 0.1, 0.85, 400, 9);
    let cfg = SvConfig::default();
    let a = particle_filter_sv(&r, &cfg, None, 11).unwrap();
    let b = particle_filter_sv(&r, &cfg, None, 11).unwrap();
    assert_eq!(a.variance, b.variance);
    assert!(a.resampled.iter().any(|&x| x));
    for (ess, &res) in a.ess.iter().zip(&a.resampled) {
        if res {
            assert!((ess - cfg.n_particles as f64).abs() < 1e-9);
        } else {
            assert!(*ess >= cfg.n_particles as f64 / 2.0);
        }
    }
    assert!(particle_filter_sv(&r, &SvConfig { n_particles: 50, ..cfg }, None, 1).is_err());
}

#[test]
fn combine_identical_forecasts() {
    let f = vec![[2e-4, 2e-4, 2e-4]; 30];
    let next: Vec<Option<f64>> = (0..30).map(|k| Some(1e-4 * (k % 4) as f64)).collect();
    for c in combine_vols(&f, &next, &KalmanConfig::default()) {
        assert!((c.value - 2e-4).abs() < 1e-16);
    }
}

#[test]
fn combine_identifies_exact_component() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 3000;
    let sq: Vec<f64> = (0..=n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (0.01 * z).powi(2)
        })
        .collect();
    let forecasts: Vec<[f64; 3]> = (0..n)
        .map(|t| [sq[t + 1], rng.random_range(0.0..2e-4), rng.random_range(0.0..2e-4)])
        .collect();
    let next: Vec<Option<f64>> = (0..n).map(|t| Some(sq[t + 1])).collect();
    let out = combine_vols(&forecasts, &next, &KalmanConfig::default());
    let w = out.last().unwrap().weights;
    assert!(w[0] > 0.9, "{w:?}");
}

#[test]
fn stress_examples() {
    let d = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
    let hist: Vec<f64> = (0..30).map(|k| 0.2 + 0.01 * (k % 5) as f64).collect();
    let mean = hist.iter().sum::<f64>() / hist.len() as f64;
    let (z, flag) = stress_zscore(mean, &hist, 250, 20);
    assert!(z.abs() < 1e-12 && !flag);

    let (z, flag) = stress_zscore(0.5, &[0.3; 40], 250, 20);
    assert_eq!(z, 0.0);
    assert!(flag);

    let vols = [0.01, 0.02, 0.015];
    let a = stress_index(d, &vols, &hist, 250).unwrap();
    let doubled: Vec<f64> = vols.iter().map(|v| v * 2.0).collect();
    let b = stress_index(d, &doubled, &hist, 250).unwrap();
    assert!((b.level - 2.0 * a.level).abs() < 1e-15);
    assert!((a.level - 0.015 * 252f64.sqrt()).abs() < 1e-15);
}

#[test]
fn stress_tracker_is_causal() {
    let d = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
    let mut t = StressTracker::new(250, 20);
    for k in 0..25 {
        let s = t.push(d, &[0.01 + 0.0001 * k as f64]).unwrap();
        assert_eq!(s.degenerate, k < 20);
    }
}

#[test]
fn surface_is_causal_and_positive() {
    let cfg = GeneratorConfig { n_instruments: 6, n_days: 320, ..GeneratorConfig::default() };
    let panel = generate_synthetic_panel(&cfg, 4).unwrap();
    let vcfg = VolConfig::default();
    let full = VolSurface::build(&panel, &vcfg).unwrap();
    let cut = 260;
    let trunc = VolSurface::build(&panel.truncate_after(cut), &vcfg).unwrap();
    let mut seen = 0;
    for day in 0..=cut {
        for inst in 0..6 {
            assert_eq!(full.get(day, inst), trunc.get(day, inst));
            if let Some(e) = full.get(day, inst) {
                seen += 1;
                assert!(e.sigma2_combined > 0.0 && e.sigma2_garch > 0.0 && e.sigma2_sv > 0.0);
                let s: f64 = e.weights.iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(full.stress(day), trunc.stress(day));
    }
    assert!(seen > 500);
    assert!(full.stress(300).is_some_and(|s| !s.degenerate));
}

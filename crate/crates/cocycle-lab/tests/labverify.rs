use cocycle_lab::cocycle::center_curve_at;
use cocycle_lab::deform::{pad, PaddingSpec};
use cocycle_lab::expr::Expr;
use cocycle_lab::labverify::*;
use cocycle_lab::potential::{ContinuumPotential, DiscretePeriodic, Periodic};
use cocycle_lab::sl2geom::{hyp_dist, rotation_raw, HPoint, Mat2};

fn bump() -> ContinuumPotential {
    ContinuumPotential::single(1.0, 0.15, Expr::T.affine(1.0 / 0.7, -0.15 / 0.7).bump().scaled(6.0)).unwrap()
}

fn small_config() -> Lemma22Config {
    Lemma22Config { energy_grid: 150, samples: 64, n_cap: 4096, ..Lemma22Config::default() }
}

#[test]
fn block_model_matches_direct_padding() {
    let v = bump();
    for e in [3.0, 12.0] {
        let spec = PaddingSpec::new(0.05, 64, 4).unwrap();
        let (sup_m, avg_m) = padded_stats_model(&v, e, &spec, 256).unwrap();
        let p = pad(&v, &spec).unwrap();
        let m = (p.period() * 64.0) as usize;
        let ts: Vec<f64> = (0..m).map(|k| p.period() * k as f64 / m as f64).collect();
        let ds: Vec<f64> = center_curve_at(&p, e, &ts).unwrap().iter().map(|u| hyp_dist(*u, HPoint::I)).collect();
        let sup = ds.iter().cloned().fold(0.0, f64::max);
        let avg = ds.iter().sum::<f64>() / m as f64;
        assert!((sup - sup_m).abs() < 1e-3 * sup, "E={e}: sup {sup} vs {sup_m}");
        assert!((avg - avg_m).abs() < 2e-3 * avg, "E={e}: avg {avg} vs {avg_m}");
    }
}

#[test]
fn zero_padding_is_flat() {
    let v = bump();
    let cfg = Lemma22Config { delta: 0.0, steps: 2, ..small_config() };
    let r = run_lemma22(&v, &cfg).unwrap();
    assert!((r.retained_fraction - (1.0 - r.step0_excluded_fraction)).abs() < 1e-12);
    for s in &r.steps {
        assert_eq!(s.exclusions.total(), 0);
        assert!(s.growth.iter().all(|g| g.fraction == 0.0));
    }
    for a in &r.averages {
        assert!((a.avg - a.avg0).abs() < 1e-8, "{a:?}");
        assert!((a.sup - a.sup0).abs() < 1e-8);
    }
}

#[test]
fn lemma22_report_invariants_and_determinism() {
    let v = bump();
    let cfg = small_config();
    let a = run_lemma22(&v, &cfg).unwrap();
    let b = run_lemma22(&v, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!((0.0..=1.0).contains(&a.retained_fraction));
    for s in &a.steps {
        assert!((0.0..=1.0).contains(&s.excluded_fraction));
        assert!(s.excluded_measure <= a.spectrum_measure);
        assert!(s.max_drift < cfg.kappa);
    }
    assert!(a.averages.iter().all(|x| x.avg.is_finite()));
    assert_eq!(a.to_csv().lines().count(), 2);
}

#[test]
fn lemma22_rejects_bad_input() {
    let v = ContinuumPotential::single(1.0, 0.15, Expr::constant(0.0)).unwrap();
    assert!(run_lemma22(&v, &small_config()).is_err());
    let cfg = Lemma22Config { steps: 100, ..small_config() };
    assert!(run_lemma22(&bump(), &cfg).is_err());
}

#[test]
fn wj_tail_law_within_three_sigma() {
    let spec = RandomModelSpec { delta: 0.01, r: 1e5, c_prime: 1.0, p: 1, trials: 1, seed: 11, c0: 1.0 };
    let (lo, hi) = spec.l_range().unwrap();
    let ls = [lo, 2 * lo, 10 * lo, hi / 2, hi];
    for c in wj_tail_check(&spec, 200_000, &ls).unwrap() {
        assert!((c.observed - c.expected).abs() <= 3.0 * c.sigma + 1e-12, "{c:?}");
    }
}

#[test]
fn wj_is_seed_deterministic() {
    let spec = RandomModelSpec { delta: 0.02, r: 1e5, c_prime: 1.0, p: 150, trials: 5000, seed: 5, c0: 3.0 };
    let a = wj_model(&spec).unwrap();
    assert_eq!(a, wj_model(&spec).unwrap());
    assert_eq!(a.histogram.iter().map(|b| b.count).sum::<usize>(), 5000);
    let other = wj_model(&RandomModelSpec { seed: 6, ..spec }).unwrap();
    assert_ne!(a.mean_sum, other.mean_sum);
}

#[test]
fn parseval_identity_small_instances() {
    let id = carleson_parseval(&[Mat2::IDENTITY; 3], 128).unwrap();
    assert_eq!(id.rhs, 0.0);
    assert!(id.lhs.abs() < 1e-15);
    for seed in 0..5 {
        let (l, b) = random_polar(seed, 4, 0.3);
        let mats: Vec<Mat2> = l.iter().zip(&b).map(|(l, b)| polar_factor(*l, *b)).collect();
        let r = carleson_parseval(&mats, 1 << 12).unwrap();
        assert!(r.gap < 1e-9, "seed {seed}: {r:?}");
    }
}

#[test]
fn parseval_gap_shrinks_with_grid() {
    let (l, b) = random_polar(2, 6, 0.3);
    let mats: Vec<Mat2> = l.iter().zip(&b).map(|(l, b)| polar_factor(*l, *b)).collect();
    let gaps: Vec<f64> = [16usize, 32, 64, 128].iter().map(|g| carleson_parseval(&mats, *g).unwrap().gap).collect();
    for w in gaps.windows(2) {
        assert!(w[1] <= w[0] + 1e-13, "{gaps:?}");
    }
}

#[test]
fn parseval_rejects_non_unimodular() {
    assert!(carleson_parseval(&[Mat2::diag(2.0, 1.0)], 8).is_err());
}

#[test]
fn b1_single_term_matches_display() {
    let (lambda, beta, theta) = (0.2, 0.13, 0.31);
    let r = carleson_b1(&[lambda], &[beta], 1, theta).unwrap();
    let phase = 2.0 * std::f64::consts::TAU * (beta + theta);
    let block = Mat2 { a: phase.cos(), b: -phase.sin(), c: -phase.sin(), d: -phase.cos() }.scale(lambda);
    let expected = rotation_raw(theta + beta) * block;
    assert!(r.b1.sub(&expected).max_abs_entry() < 1e-12);
}

#[test]
fn b1_secant_error_is_bounded() {
    let (l, b) = random_polar(9, 32, 0.3);
    let bound: f64 = l.iter().sum::<f64>().powi(2);
    for k in 0..64 {
        let r = carleson_b1(&l, &b, 32, k as f64 / 64.0).unwrap();
        assert!(r.secant_error <= bound, "theta {k}/64: {}", r.secant_error);
    }
}

#[test]
fn free_potential_crookedness_threshold() {
    let v = ContinuumPotential::free(1.0).unwrap();
    assert!(crooked_metric(&v, 0.1, 0.99, 20.0, 40).unwrap().crooked);
    assert!(!crooked_metric(&v, 0.1, 1.01, 20.0, 40).unwrap().crooked);
}

#[test]
fn crooked_set_shrinks_with_threshold() {
    let v = bump();
    let counts: Vec<usize> = [1.0, 1.2, 1.5, 2.0].iter().map(|c| crooked_metric(&v, 0.3, *c, 20.0, 60).unwrap().gamma_count).collect();
    for w in counts.windows(2) {
        assert!(w[1] <= w[0], "{counts:?}");
    }
}

#[test]
fn periodic_potentials_are_good_and_nice() {
    let v = bump();
    let r = good_nice_metrics(&v, 1e-4, 20.0).unwrap();
    assert!(r.sup_l.abs() < 1e-10);
    assert!(r.good && r.nice, "{r:?}");
    let d = DiscretePeriodic::new(vec![0.3, -0.5, 1.1]).unwrap();
    let r = good_nice_metrics(&d, 1e-6, 3.0).unwrap();
    assert!(r.sup_l.abs() < 1e-10 && r.ids_deficit.abs() < 1e-6, "{r:?}");
}

#[test]
fn asd12_zero_delta_has_flat_growth() {
    let cfg = Asd12Config { delta: 0.0, energy_grid: 40, t_samples: 8, cert_energies: 4, ..Asd12Config::default() };
    let r = run_asd12(&cosine_family(0.1), (-1.6, 1.6), &cfg).unwrap();
    assert_eq!(r.steps.len(), 2);
    assert!(r.steps[1].mean_growth.abs() < 1e-2, "{:?}", r.steps[1]);
    assert!(r.steps[1].min_growth > -1e-2);
    assert!(r.certificate.pass);
}

#[test]
fn asd12_collapses_on_empty_interval() {
    let cfg = Asd12Config { energy_grid: 10, ..Asd12Config::default() };
    assert!(run_asd12(&cosine_family(0.1), (2.5, 3.0), &cfg).is_err());
    let _ = DiscretePeriodic::free().period();
}

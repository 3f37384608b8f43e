use cocycle_lab::cocycle::{band_spectrum, lyapunov};
use cocycle_lab::potential::{DiscretePeriodic, Periodic};
use cocycle_lab::sl2geom::{rotation, Mat2, Turns};
use proptest::prelude::*;

fn sl2() -> impl Strategy<Value = Mat2> {
    (0.0..1.0f64, 0.0..3.0f64, 0.0..1.0f64)
        .prop_map(|(u, log_s, w)| rotation(Turns::new(u)) * Mat2::diag(log_s.exp(), (-log_s).exp()) * rotation(Turns::new(w)))
}

proptest! {
    #[test]
    fn polar_reconstructs(m in sl2()) {
        let p = m.polar();
        prop_assert!(p.sigma >= 1.0);
        let err = p.matrix().sub(&m).max_abs_entry();
        prop_assert!(err <= 1e-12 * m.frobenius_sq(), "err {err}");
        prop_assert!((p.sigma - m.norm()).abs() <= 1e-12 * m.norm());
    }

    #[test]
    fn pow_matches_repeated_product(m in sl2(), k in 0u64..12) {
        let mut want = Mat2::IDENTITY;
        for _ in 0..k {
            want = m * want;
        }
        let got = m.pow(k);
        let scale = want.frobenius_sq().max(1.0);
        prop_assert!(got.sub(&want).max_abs_entry() <= 1e-10 * scale);
    }

    /// Constant potential `v` repeated `p` times: trace is `2 T_p((E - v)/2)`.
    #[test]
    fn constant_potential_trace_is_chebyshev(v in -1.0..1.0f64, p in 1usize..9, e in -4.0..4.0f64) {
        let pot = DiscretePeriodic::new(vec![v; p]).unwrap();
        let x = 0.5 * (e - v);
        let tr = pot.monodromy(e, 0.0).unwrap().trace();
        let want = if x.abs() <= 1.0 {
            2.0 * (p as f64 * x.acos()).cos()
        } else {
            2.0 * x.signum().powi(p as i32) * (p as f64 * x.abs().acosh()).cosh()
        };
        prop_assert!((tr - want).abs() <= 1e-9 * want.abs().max(1.0), "{tr} vs {want}");
        let gamma = lyapunov(&pot, e).unwrap();
        let want_gamma = if x.abs() > 1.0 { x.abs().acosh() } else { 0.0 };
        prop_assert!((gamma - want_gamma).abs() <= 1e-9);
    }

    /// Band measure of a period-`p` Jacobi matrix with off-diagonal one is at most 4.
    #[test]
    fn band_measure_bounded(values in prop::collection::vec(-1.5..1.5f64, 1..6)) {
        let pot = DiscretePeriodic::new(values.clone()).unwrap();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0;
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0;
        let bands = band_spectrum(&pot, lo - 0.01, hi + 0.01, 1e-11).unwrap();
        prop_assert!(bands.bands.len() <= values.len());
        prop_assert!(bands.measure() <= 4.0 + 1e-9);
        for &(a, b) in &bands.bands {
            let mid = 0.5 * (a + b);
            prop_assert!(pot.monodromy(mid, 0.0).unwrap().trace().abs() <= 2.0 + 1e-9);
        }
    }
}

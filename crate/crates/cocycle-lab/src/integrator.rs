//! Propagators for `y'' = -(E + V) y` written as the first-order system
//! `A' = [[0, -(E+V)], [1, 0]] A`.
//!
//! Smooth stretches use a sixth-order Magnus step on three Gauss nodes; each step is
//! an exact exponential of a traceless matrix, so det stays at one up to rounding.

use crate::sl2geom::{Chain, Mat2};

const SQRT15: f64 = 3.872_983_346_207_417;

fn generator(q: f64) -> Mat2 {
    Mat2::new(0.0, -q, 1.0, 0.0)
}

fn commutator(x: &Mat2, y: &Mat2) -> Mat2 {
    (*x * *y).sub(&(*y * *x))
}

/// `exp` of a traceless 2x2 matrix.
pub fn exp_traceless(m: &Mat2) -> Mat2 {
    let p = 0.5 * (m.a - m.d);
    let kappa = p * p + m.b * m.c;
    let (ch, sh_over_k) = if kappa.abs() < 1e-8 {
        // series keeps full precision near the parabolic case
        (1.0 + kappa / 2.0 + kappa * kappa / 24.0, 1.0 + kappa / 6.0 + kappa * kappa / 120.0)
    } else if kappa > 0.0 {
        let k = kappa.sqrt();
        (k.cosh(), k.sinh() / k)
    } else {
        let k = (-kappa).sqrt();
        (k.cos(), k.sin() / k)
    };
    let traceless = Mat2::new(p, m.b, m.c, -p);
    Mat2::IDENTITY.scale(ch).add(&traceless.scale(sh_over_k))
}

/// One Magnus step of length `h` from `x0`; `q(x) = E + V(x)`.
pub fn magnus_step<F: Fn(f64) -> f64>(q: &F, x0: f64, h: f64) -> Mat2 {
    let c = SQRT15 / 10.0;
    let a1 = generator(q(x0 + h * (0.5 - c)));
    let a2 = generator(q(x0 + 0.5 * h));
    let a3 = generator(q(x0 + h * (0.5 + c)));
    let alpha1 = a2.scale(h);
    let alpha2 = a3.sub(&a1).scale(SQRT15 * h / 3.0);
    let alpha3 = a3.sub(&a2.scale(2.0)).add(&a1).scale(10.0 * h / 3.0);
    let c1 = commutator(&alpha1, &alpha2);
    let c2 = commutator(&alpha1, &alpha3.scale(2.0).add(&c1)).scale(-1.0 / 60.0);
    let left = alpha1.scale(-20.0).sub(&alpha3).add(&c1);
    let right = alpha2.add(&c2);
    let omega = alpha1
        .add(&alpha3.scale(1.0 / 12.0))
        .add(&commutator(&left, &right).scale(1.0 / 240.0));
    exp_traceless(&omega)
}

/// Propagator over `[x0, x1]` with at most `max_step` per step.
pub fn propagate<F: Fn(f64) -> f64>(q: &F, x0: f64, x1: f64, max_step: f64) -> Mat2 {
    let len = x1 - x0;
    if len <= 0.0 {
        return Mat2::IDENTITY;
    }
    let steps = (len / max_step).ceil().max(1.0) as usize;
    let h = len / steps as f64;
    let mut chain = Chain::new();
    for k in 0..steps {
        chain.push(magnus_step(q, x0 + k as f64 * h, h));
    }
    chain.finish()
}

/// Exact propagator of the zero potential over length `len`, valid for every real E.
pub fn free_propagator(e: f64, len: f64) -> Mat2 {
    if e > 0.0 {
        let k = e.sqrt();
        let (s, c) = (k * len).sin_cos();
        Mat2::new(c, -k * s, s / k, c)
    } else if e < 0.0 {
        let k = (-e).sqrt();
        let (sh, ch) = ((k * len).sinh(), (k * len).cosh());
        Mat2::new(ch, k * sh, sh / k, ch)
    } else {
        Mat2::new(1.0, 0.0, len, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_potential_matches_free_solution() {
        for e in [-2.0, 0.0, 0.5, 7.0, 40.0] {
            let q = |_x: f64| e;
            let got = propagate(&q, 0.2, 1.7, 1.0 / 64.0);
            let want = free_propagator(e, 1.5);
            assert!(got.sub(&want).max_abs_entry() < 1e-12, "E={e}");
        }
    }

    #[test]
    fn sixth_order_convergence() {
        let q = |x: f64| 3.0 + 2.0 * (6.0 * x).cos();
        let reference = propagate(&q, 0.0, 1.0, 1.0 / 4096.0);
        let coarse = propagate(&q, 0.0, 1.0, 1.0 / 8.0);
        let fine = propagate(&q, 0.0, 1.0, 1.0 / 16.0);
        let e1 = coarse.sub(&reference).max_abs_entry();
        let e2 = fine.sub(&reference).max_abs_entry();
        let order = (e1 / e2).log2();
        assert!(order > 5.5, "observed order {order}");
    }

    #[test]
    fn unimodular() {
        let q = |x: f64| 10.0 * (x * 3.0).sin();
        let m = propagate(&q, 0.0, 5.0, 1e-3);
        // ad - bc cannot be resolved below eps * |M|_F^2
        let floor = 8.0 * f64::EPSILON * m.frobenius_sq();
        assert!((m.det() - 1.0).abs() <= floor.max(1e-12), "det {} floor {floor}", m.det());
    }
}

//! Gauss–Legendre rules and the band-edge substitution used for spectral integrals.

use std::f64::consts::PI;

/// Nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = -x;
        xs[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

/// Composite rule on `[a, b]` with `panels` panels of `order` nodes each.
pub fn composite(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (xs, ws) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (x, w) in xs.iter().zip(&ws) {
            out.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
        }
    }
    out
}

/// Nodes for `∫_a^b f(E) dE` when `f` has inverse-square-root singularities at
/// both ends: each half uses `E = edge ± x²`, so the weights absorb the `2x` Jacobian.
pub fn band_rule(a: f64, b: f64, nodes: usize) -> Vec<(f64, f64)> {
    edge_rule(a, b, nodes, true, true)
}

/// Like [`band_rule`], with the substitution applied only at the flagged ends.
pub fn edge_rule(a: f64, b: f64, nodes: usize, sing_lo: bool, sing_hi: bool) -> Vec<(f64, f64)> {
    let per_side = (nodes / 2).max(1);
    let order = per_side.min(16);
    let panels = per_side.div_ceil(order);
    let sqrt_rule = |len: f64| composite(0.0, len.max(0.0).sqrt(), panels, order);
    match (sing_lo, sing_hi) {
        (true, true) => {
            let mid = 0.5 * (a + b);
            let mut out: Vec<(f64, f64)> = sqrt_rule(mid - a).into_iter().map(|(x, w)| (a + x * x, 2.0 * x * w)).collect();
            out.extend(sqrt_rule(b - mid).into_iter().rev().map(|(x, w)| (b - x * x, 2.0 * x * w)));
            out
        }
        (true, false) => sqrt_rule(b - a).into_iter().map(|(x, w)| (a + x * x, 2.0 * x * w)).collect(),
        (false, true) => sqrt_rule(b - a).into_iter().rev().map(|(x, w)| (b - x * x, 2.0 * x * w)).collect(),
        (false, false) => composite(a, b, 2 * panels, order),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let (xs, ws) = gauss_legendre(5);
        let s: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        let total: f64 = ws.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn edge_rule_handles_sqrt_singularity() {
        let s: f64 = band_rule(-2.0, 2.0, 64).iter().map(|(e, w)| w / (4.0 - e * e).sqrt()).sum();
        assert!((s - PI).abs() < 1e-12, "{s}");
    }
}

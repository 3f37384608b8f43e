//! Slow deformations: products `A(t + (n−1)h) ⋯ A(t)` of a smooth elliptic
//! family sampled at a slowly advancing parameter, and the iterated normal form
//! that conjugates each factor close to a rotation.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::potential::{CirclePotential, DiscreteFamily};
use crate::sl2geom::{conjugator, fixed_point, hyp_dist, rotation_angle, rotation_raw, Chain, Mat2};

/// Smallest `t`-grid used by [`normal_form`].
pub const MIN_GRID: usize = 512;

/// `A(E, t)` is the monodromy of the slice `𝒱_{t·N₀}` of `family`.
///
/// With `inner_period = N > 1` the ellipticity hypothesis is on the `N`-step
/// product `A^{(N)}(E, t) = A(E, t + (N−1)/N) ⋯ A(E, t)` and slow products advance by
/// `(n+1)/(nN)` instead of `1/n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothCocycleFamily {
    pub energies: (f64, f64),
    pub family: DiscreteFamily,
    pub inner_period: usize,
}

impl SmoothCocycleFamily {
    /// `A(E, t) = [[E − 2λ cos 2πt, −1], [1, 0]]` on `J = [−1, 1]` with `λ = 0.3`.
    pub fn bundled_continuum() -> Self {
        let family = DiscreteFamily { n0: 1.0, n1: 1, expr: Expr::T.cos().scaled(0.6) };
        SmoothCocycleFamily { energies: (-1.0, 1.0), family, inner_period: 1 }
    }

    /// `A(E, t) = [[E − v(2t), −1], [1, 0]]` with `v(2t) = 0.4 cos 2πt`, on `J = [0.6, 1.8]`.
    pub fn bundled_discrete() -> Self {
        let family = DiscreteFamily { n0: 1.0, n1: 1, expr: Expr::T.cos().scaled(0.4) };
        SmoothCocycleFamily { energies: (0.6, 1.8), family, inner_period: 2 }
    }

    /// `A(E, t) = [[E − v(Nt), −1], [1, 0]]` for a potential `v` on `R/NZ`.
    pub fn from_circle(v: &CirclePotential, energies: (f64, f64)) -> Self {
        let n = v.n as f64;
        let expr = v.expr.clone().substitute(Expr::T.scaled(n).modulo(n), Expr::Const(0.0));
        SmoothCocycleFamily { energies, family: DiscreteFamily { n0: 1.0, n1: 1, expr }, inner_period: v.n }
    }

    pub fn a(&self, e: f64, t: f64) -> Mat2 {
        self.family.monodromy(e, t.rem_euclid(1.0) * self.family.n0, 0)
    }

    /// `A^{(N)}(E, t)`.
    pub fn base_product(&self, e: f64, t: f64) -> Mat2 {
        let n = self.inner_period;
        let mut chain = Chain::new();
        for k in 0..n {
            chain.push(self.a(e, t + k as f64 / n as f64));
        }
        chain.finish()
    }

    /// Parameter advance per factor of the slow product of order `n`.
    pub fn step(&self, n: usize) -> f64 {
        let big = self.inner_period as f64;
        if self.inner_period == 1 {
            1.0 / n as f64
        } else {
            (n as f64 + 1.0) / (n as f64 * big)
        }
    }

    /// Number of factors in the slow product of order `n`.
    pub fn factors(&self, n: usize) -> usize {
        n * self.inner_period
    }

    /// `max |tr A^{(N)}|` over a `grid × grid` sample of `J × R/Z`; errors unless
    /// it stays below `2 − 1e-6`.
    pub fn ellipticity_certificate(&self, grid: usize) -> Result<f64> {
        let (lo, hi) = self.energies;
        let worst = (0..grid)
            .into_par_iter()
            .map(|i| {
                let e = lo + (hi - lo) * i as f64 / (grid - 1).max(1) as f64;
                (0..grid)
                    .map(|k| self.base_product(e, k as f64 / grid as f64).trace().abs())
                    .fold(0.0, f64::max)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(0.0, f64::max);
        if worst >= 2.0 - 1e-6 {
            return Err(Error::Domain(format!("family is not uniformly elliptic: max |tr| = {worst}")));
        }
        Ok(worst)
    }
}

/// Stage `m` of the normal form at one energy, tabulated on `grid` equispaced `t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalFormStage {
    pub m: usize,
    pub n: usize,
    pub energy: f64,
    pub grid: usize,
    pub b: Vec<Mat2>,
    /// Lifted angles, continuous along the grid.
    pub theta: Vec<f64>,
    /// `sup_t ‖A_{(m,n)} − R_{θ_{(m,n)}}‖`.
    pub residual: f64,
    /// `sup_t ‖B_{(m,n)} − B‖`.
    pub b_drift: f64,
    /// `sup_t |θ_{(m,n)} − θ|`.
    pub theta_drift: f64,
}

impl NormalFormStage {
    /// `A_{(m,n)}(E, t_k) = B(t_k + h) A(E, t_k) B(t_k)⁻¹` from the stored table.
    pub fn conjugated(&self, f: &SmoothCocycleFamily, k: usize) -> Mat2 {
        let shift = grid_shift(f, self.n, self.grid);
        let t = k as f64 / self.grid as f64;
        self.b[(k + shift) % self.grid] * f.a(self.energy, t) * self.b[k].inverse()
    }
}

fn grid_size(f: &SmoothCocycleFamily, n: usize) -> usize {
    let unit = n * f.inner_period;
    unit * MIN_GRID.div_ceil(unit)
}

fn grid_shift(f: &SmoothCocycleFamily, n: usize, grid: usize) -> usize {
    if f.inner_period == 1 {
        grid / n
    } else {
        (n + 1) * grid / (n * f.inner_period)
    }
}

fn rotation_of(m: &Mat2) -> f64 {
    // angle of a matrix that is a rotation up to rounding
    (m.c - m.b).atan2(m.a + m.d) / TAU
}

fn unwrap(values: &mut [f64]) {
    for k in 1..values.len() {
        let d = values[k] - values[k - 1];
        values[k] -= d.round();
    }
}

fn breakdown(stage: usize, k: usize, grid: usize, err: Error) -> Error {
    Error::Breakdown { stage, reason: format!("at t = {}: {err}", k as f64 / grid as f64) }
}

/// Builds stages `1..=m` by `B_{(j+1,n)} = 𝔅(A_{(j,n)}) B_{(j,n)}`, `θ_{(j+1,n)} = Θ(A_{(j,n)})`.
pub fn normal_form(f: &SmoothCocycleFamily, m: usize, n: usize, e: f64) -> Result<NormalFormStage> {
    if m == 0 || n == 0 {
        return Err(Error::Domain("normal form needs m, n >= 1".into()));
    }
    let grid = grid_size(f, n);
    let shift = grid_shift(f, n, grid);
    let a: Vec<Mat2> = (0..grid).map(|k| f.a(e, k as f64 / grid as f64)).collect();
    let mut b = Vec::with_capacity(grid);
    let mut theta = Vec::with_capacity(grid);
    if f.inner_period == 1 {
        for (k, ak) in a.iter().enumerate() {
            b.push(conjugator(ak).map_err(|err| breakdown(1, k, grid, err))?);
            theta.push(rotation_angle(ak).map_err(|err| breakdown(1, k, grid, err))?.value());
        }
    } else {
        for k in 0..grid {
            let prod = f.base_product(e, k as f64 / grid as f64);
            b.push(conjugator(&prod).map_err(|err| breakdown(1, k, grid, err))?);
        }
        let step = grid / f.inner_period;
        for k in 0..grid {
            theta.push(rotation_of(&(b[(k + step) % grid] * a[k] * b[k].inverse())).rem_euclid(1.0));
        }
    }
    unwrap(&mut theta);
    let base_b = b.clone();
    let base_theta = theta.clone();
    let inner = f.inner_period;
    for stage in 2..=m {
        let conj: Vec<Mat2> = (0..grid).map(|k| b[(k + shift) % grid] * a[k] * b[k].inverse()).collect();
        let mut next_b = Vec::with_capacity(grid);
        let mut next_theta = Vec::with_capacity(grid);
        for k in 0..grid {
            // the inner-period product of the conjugated cocycle is the one whose
            // fixed point moves slowly along the shifted grid
            let mut chain = Chain::new();
            for r in 0..inner {
                chain.push(conj[(k + r * shift) % grid]);
            }
            let c = conjugator(&chain.finish()).map_err(|err| breakdown(stage, k, grid, err))?;
            next_b.push(c * b[k]);
            if inner == 1 {
                next_theta.push(rotation_angle(&conj[k]).map_err(|err| breakdown(stage, k, grid, err))?.value());
            }
        }
        if inner > 1 {
            // a shift of about 1/N does not commute with the correction, so the
            // angle is read off the newly conjugated cocycle
            for k in 0..grid {
                let ak = next_b[(k + shift) % grid] * a[k] * next_b[k].inverse();
                next_theta.push(rotation_angle(&ak).map_err(|err| breakdown(stage, k, grid, err))?.value());
            }
        }
        // keep the lift next to the previous stage's lift
        for (k, th) in next_theta.iter_mut().enumerate() {
            *th += (theta[k] - *th).round();
        }
        b = next_b;
        theta = next_theta;
    }
    let mut residual: f64 = 0.0;
    let mut b_drift: f64 = 0.0;
    let mut theta_drift: f64 = 0.0;
    for k in 0..grid {
        let ak = b[(k + shift) % grid] * a[k] * b[k].inverse();
        residual = residual.max(ak.sub(&rotation_raw(theta[k])).norm());
        b_drift = b_drift.max(b[k].sub(&base_b[k]).norm());
        theta_drift = theta_drift.max((theta[k] - base_theta[k]).abs());
    }
    Ok(NormalFormStage { m, n, energy: e, grid, b, theta, residual, b_drift, theta_drift })
}

/// `A(t + (k−1)h) ⋯ A(t)` with `k` factors.
fn stepped_product(f: &SmoothCocycleFamily, factors: usize, h: f64, e: f64, t: f64) -> Mat2 {
    let mut chain = Chain::new();
    for k in 0..factors {
        chain.push(f.a(e, t + k as f64 * h));
    }
    chain.finish()
}

/// `A^{(n)}(E, t) = A(E, t + (n−1)/n) ⋯ A(E, t)`.
pub fn slow_product(f: &SmoothCocycleFamily, n: usize, e: f64, t: f64) -> Mat2 {
    stepped_product(f, n, 1.0 / n as f64, e, t)
}

/// `A^{(N∗n)}(E, t)`: `nN` factors advancing by `(n+1)/(nN)`.
pub fn slow_product_discrete(f: &SmoothCocycleFamily, n: usize, e: f64, t: f64) -> Mat2 {
    stepped_product(f, f.factors(n), f.step(n), e, t)
}

/// Slow product matching the family's variant.
pub fn slow_product_auto(f: &SmoothCocycleFamily, n: usize, e: f64, t: f64) -> Mat2 {
    if f.inner_period == 1 {
        slow_product(f, n, e, t)
    } else {
        slow_product_discrete(f, n, e, t)
    }
}

/// Phase proxy `θ̃⁽ⁿ⁾(E)`: the number of factors times the mean of `θ_{(m,n)}(E, ·)`, mod 1.
pub fn tilde_theta(f: &SmoothCocycleFamily, m: usize, n: usize, e: f64) -> Result<f64> {
    let stage = normal_form(f, m, n, e)?;
    let mean = stage.theta.iter().sum::<f64>() / stage.grid as f64;
    Ok((f.factors(n) as f64 * mean).rem_euclid(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub energy: f64,
    pub tilde_theta: f64,
    pub excluded: bool,
    /// `sup_t d(u(A^{(n)}(E,t)), u(A^{(N)}(E,t)))`, absent when excluded.
    pub sup_dist: Option<f64>,
    /// `sup_t |tr A^{(n)}(E,t) − 2cos 2πθ̃⁽ⁿ⁾(E)|`.
    pub trace_gap: f64,
}

pub fn fixed_point_stability(
    f: &SmoothCocycleFamily,
    m: usize,
    n: usize,
    e: f64,
    delta_threshold: f64,
    t_samples: usize,
) -> Result<StabilityReport> {
    let tt = tilde_theta(f, m, n, e)?;
    let mut sup_dist: f64 = 0.0;
    let mut trace_gap: f64 = 0.0;
    let mut excluded = (TAU * tt).sin().abs() <= delta_threshold;
    for k in 0..t_samples {
        let t = k as f64 / t_samples as f64;
        let p = slow_product_auto(f, n, e, t);
        trace_gap = trace_gap.max((p.trace() - 2.0 * (TAU * tt).cos()).abs());
        if excluded {
            continue;
        }
        match (fixed_point(&p), fixed_point(&f.base_product(e, t))) {
            (Ok(u), Ok(u0)) => sup_dist = sup_dist.max(hyp_dist(u, u0)),
            _ => excluded = true,
        }
    }
    Ok(StabilityReport { energy: e, tilde_theta: tt, excluded, sup_dist: (!excluded).then_some(sup_dist), trace_gap })
}

/// Kolmogorov–Smirnov distance of a sample in [0, 1) to the uniform law.
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|x| x.rem_euclid(1.0)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub m: usize,
    pub n: usize,
    pub residual: f64,
    pub b_drift: f64,
    pub theta_drift: f64,
}

/// Worst-case normal-form statistics over an energy sample, one row per `(m, n)`.
pub fn decay_table(f: &SmoothCocycleFamily, ms: &[usize], ns: &[usize], energies: &[f64]) -> Result<Vec<DecayRow>> {
    let mut rows = Vec::new();
    for &m in ms {
        for &n in ns {
            let stages: Vec<NormalFormStage> =
                energies.par_iter().map(|&e| normal_form(f, m, n, e)).collect::<Result<_>>()?;
            let pick = |g: fn(&NormalFormStage) -> f64| stages.iter().map(g).fold(0.0, f64::max);
            rows.push(DecayRow {
                m,
                n,
                residual: pick(|s| s.residual),
                b_drift: pick(|s| s.b_drift),
                theta_drift: pick(|s| s.theta_drift),
            });
        }
    }
    Ok(rows)
}

/// Smallest power-of-two `n ≥ start` for which stages `1..=m` stay elliptic on `energies`.
pub fn discover_n(f: &SmoothCocycleFamily, m: usize, start: usize, cap: usize, energies: &[f64]) -> Result<usize> {
    let mut n = start.max(1);
    loop {
        if energies.iter().all(|&e| normal_form(f, m, n, e).is_ok()) {
            return Ok(n);
        }
        if n >= cap {
            return Err(Error::Breakdown { stage: m, reason: format!("still breaking down at n = {n}") });
        }
        n *= 2;
    }
}

//! Spectral quantities of periodic Schrödinger cocycles: bands, fixed-point curves,
//! integrated density of states, Lyapunov exponents, Bloch solutions and the
//! band functionals built from them.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{transfer_discrete, DiscretePeriodic, Periodic};
use crate::quad::{band_rule, composite, edge_rule};
use crate::sl2geom::{cosh_dist, fixed_point, hyp_dist, moebius, rotation_angle, HPoint, Mat2, Turns};

/// Largest energy grid `band_spectrum` will evaluate.
pub const SCAN_BUDGET: usize = 1 << 20;

const CLOSED_GAP_SLACK: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSet {
    pub bands: Vec<(f64, f64)>,
    pub tol: f64,
}

impl BandSet {
    pub fn measure(&self) -> f64 {
        self.bands.iter().map(|(a, b)| b - a).sum()
    }

    /// Bands clipped to `(-∞, cap]`.
    pub fn below(&self, cap: f64) -> BandSet {
        let bands = self
            .bands
            .iter()
            .filter(|(a, _)| *a < cap)
            .map(|&(a, b)| (a, b.min(cap)))
            .collect();
        BandSet { bands, tol: self.tol }
    }

    pub fn contains(&self, e: f64) -> bool {
        self.bands.iter().any(|&(a, b)| a <= e && e <= b)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("E_lo,E_hi\n");
        for (a, b) in &self.bands {
            s.push_str(&format!("{a},{b}\n"));
        }
        s
    }
}

pub fn transfer_continuum(v: &crate::potential::ContinuumPotential, e: f64, t: f64, s: f64) -> Result<Mat2> {
    v.transfer(e, t, s)
}

pub fn monodromy(v: &dyn Periodic, e: f64, base: f64) -> Result<Mat2> {
    v.monodromy(e, base)
}

/// Energies outside `[lo, hi]` cannot be in the spectrum.
pub fn spectral_hull(v: &dyn Periodic) -> (f64, f64) {
    let (vmin, vmax) = v.value_bounds();
    if v.is_discrete() {
        (vmin - 2.0, vmax + 2.0)
    } else {
        (-vmax, f64::INFINITY)
    }
}

fn expected_bands(v: &dyn Periodic, e_max: f64) -> usize {
    if v.is_discrete() {
        v.period() as usize
    } else {
        let (_, vmax) = v.value_bounds();
        (v.period() * (e_max + vmax).max(0.0).sqrt() / PI).ceil() as usize + 2
    }
}

fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Closures of the maximal intervals in `[e_min, e_max]` with `|tr| ≤ 2`.
pub fn band_spectrum(v: &dyn Periodic, e_min: f64, e_max: f64, tol: f64) -> Result<BandSet> {
    if !(e_min < e_max) || !(tol > 0.0) {
        return Err(Error::Domain(format!("need e_min < e_max and tol > 0, got [{e_min}, {e_max}], tol {tol}")));
    }
    let (hull_lo, hull_hi) = spectral_hull(v);
    let lo = e_min.max(hull_lo - 1e-9);
    let hi = e_max.min(hull_hi + 1e-9);
    if lo >= hi {
        return Ok(BandSet { bands: vec![], tol });
    }
    let points = 4096.max(64 * expected_bands(v, hi));
    if points > SCAN_BUDGET {
        return Err(Error::Resolution { needed: points, budget: SCAN_BUDGET });
    }
    let grid: Vec<f64> = (0..=points).map(|k| lo + (hi - lo) * k as f64 / points as f64).collect();
    let mats: Vec<Mat2> = grid.par_iter().map(|&e| v.monodromy(e, 0.0)).collect::<Result<_>>()?;
    let g = |e: f64| v.monodromy(e, 0.0).map(|m| m.trace().abs() - 2.0).unwrap_or(f64::INFINITY);
    let c_entry = |e: f64| v.monodromy(e, 0.0).map(|m| m.c).unwrap_or(f64::NAN);

    let mut edges: Vec<(f64, bool)> = Vec::new();
    let mut inside = mats[0].trace().abs() <= 2.0;
    if inside {
        edges.push((lo, true));
    }
    for k in 0..points {
        let (ea, eb) = (grid[k], grid[k + 1]);
        let (ma, mb) = (mats[k], mats[k + 1]);
        let ga = ma.trace().abs() - 2.0;
        let gb = mb.trace().abs() - 2.0;
        match (ga <= 0.0, gb <= 0.0) {
            (true, true) => {
                if ma.c * mb.c < 0.0 {
                    let x = bisect(&c_entry, ea, eb, tol.min(1e-14 * eb.abs().max(1.0)));
                    if g(x) <= CLOSED_GAP_SLACK {
                        edges.push((x, false));
                        edges.push((x, true));
                    } else {
                        edges.push((bisect(&g, ea, x, tol), false));
                        edges.push((bisect(&g, x, eb, tol), true));
                    }
                }
            }
            (true, false) => {
                edges.push((bisect(&g, ea, eb, tol), false));
                inside = false;
            }
            (false, true) => {
                edges.push((bisect(&g, ea, eb, tol), true));
                inside = true;
            }
            (false, false) => {
                if let Some((a, b)) = refine_gap_interval(&g, ea, eb, ga, gb, tol) {
                    edges.push((a, true));
                    edges.push((b, false));
                }
            }
        }
    }
    if inside {
        edges.push((hi, false));
    }
    let mut bands = Vec::new();
    let mut open: Option<f64> = None;
    for (x, start) in edges {
        if start {
            open = Some(x);
        } else if let Some(a) = open.take() {
            bands.push((a, x.max(a)));
        }
    }
    Ok(BandSet { bands, tol })
}

/// Looks for a band narrower than the grid step between two gap samples.
fn refine_gap_interval<F: Fn(f64) -> f64>(g: &F, ea: f64, eb: f64, ga: f64, gb: f64, tol: f64) -> Option<(f64, f64)> {
    let mid = 0.5 * (ea + eb);
    let gm = g(mid);
    if gm >= ga.min(gb) {
        return None;
    }
    const SUB: usize = 16;
    let xs: Vec<f64> = (0..=SUB).map(|k| ea + (eb - ea) * k as f64 / SUB as f64).collect();
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let k = (0..=SUB).find(|&k| gs[k] <= 0.0)?;
    let last = (0..=SUB).rev().find(|&k| gs[k] <= 0.0)?;
    let a = if k == 0 { ea } else { bisect(g, xs[k - 1], xs[k], tol) };
    let b = if last == SUB { eb } else { bisect(g, xs[last], xs[last + 1], tol) };
    Some((a, b))
}

/// `u[V](E, t)` at each basepoint in `ts` (ascending, within one period of `ts[0]`).
pub fn center_curve_at(v: &dyn Periodic, e: f64, ts: &[f64]) -> Result<Vec<HPoint>> {
    let Some(&t0) = ts.first() else { return Ok(vec![]) };
    let mut u = fixed_point(&v.monodromy(e, t0)?)?;
    let mut out = Vec::with_capacity(ts.len());
    out.push(u);
    for w in ts.windows(2) {
        u = moebius(&v.transfer(e, w[0], w[1])?, u)?;
        out.push(u);
    }
    Ok(out)
}

pub fn center_curve(v: &dyn Periodic, e: f64, samples: usize) -> Result<Vec<HPoint>> {
    center_curve_at(v, e, &v.basepoints(samples))
}

/// Density of states: `(1/2πT)·∫ dt / Im u(E, t)` (a sum over sites for discrete potentials).
pub fn ids_density(v: &dyn Periodic, e: f64, quad_points: usize) -> Result<f64> {
    let t = v.period();
    let integral = if v.is_discrete() {
        center_curve(v, e, 0)?.iter().map(|u| 1.0 / u.im).sum::<f64>()
    } else {
        let order = 8;
        let rule = composite(0.0, t, quad_points.div_ceil(order).max(1), order);
        let ts: Vec<f64> = rule.iter().map(|(x, _)| *x).collect();
        let us = center_curve_at(v, e, &ts)?;
        rule.iter().zip(&us).map(|((_, w), u)| w / u.im).sum::<f64>()
    };
    Ok(integral / (2.0 * PI * t))
}

pub fn ids_density_continuum(v: &crate::potential::ContinuumPotential, e: f64, quad_points: usize) -> Result<f64> {
    ids_density(v, e, quad_points)
}

/// Integrated density of states from the rotation number and the band count below `E`.
///
/// Each band carries mass `1/T`; inside a band the fraction is read off `2Θ`.
pub fn ids(v: &dyn Periodic, e: f64) -> Result<f64> {
    let (hull_lo, _) = spectral_hull(v);
    if e < hull_lo {
        return Ok(0.0);
    }
    let bands = band_spectrum(v, hull_lo - 1.0, e + 1.0, 1e-12)?;
    ids_with_bands(v, &bands, e)
}

/// As [`ids`] with a band set that covers everything below `e`.
pub fn ids_with_bands(v: &dyn Periodic, bands: &BandSet, e: f64) -> Result<f64> {
    let t = v.period();
    let below = bands.bands.iter().filter(|(_, b)| *b < e).count();
    let m = v.monodromy(e, 0.0)?;
    let frac = if m.is_elliptic() && bands.contains(e) {
        let theta = rotation_angle(&m)?.value();
        if v.is_discrete() {
            2.0 * ((2.0 * theta).ceil() / 2.0 - theta)
        } else {
            2.0 * (theta - (2.0 * theta).floor() / 2.0)
        }
    } else {
        match bands.bands.iter().find(|(a, b)| *a <= e && e <= *b) {
            // an edge or a point numerically on |tr| = 2 inside a band
            Some(&(a, b)) => {
                if e - a <= b - e {
                    0.0
                } else {
                    1.0
                }
            }
            None => 0.0,
        }
    };
    Ok((below as f64 + frac) / t)
}

/// Eigenvalue counting fraction of the Dirichlet truncation to sites `1..=len`.
pub fn dirichlet_count(v: &DiscretePeriodic, e: f64, len: usize) -> f64 {
    // Sturm count: negative pivots of H − E in its LDLᵀ factorization
    let mut count = 0usize;
    let mut pivot = 1.0;
    for k in 1..=len as i64 {
        let diag = v.at(k) - e;
        pivot = if k == 1 { diag } else { diag - 1.0 / pivot };
        if pivot == 0.0 {
            pivot = -1e-300;
        }
        if pivot < 0.0 {
            count += 1;
        }
    }
    count as f64 / len as f64
}

pub fn lyapunov(v: &dyn Periodic, e: f64) -> Result<f64> {
    Ok(lyapunov_from_monodromy(&v.monodromy(e, 0.0)?, v.period()))
}

/// `ln ρ(M) / T` for a monodromy `M` over period `T`.
pub fn lyapunov_from_monodromy(m: &Mat2, period: f64) -> f64 {
    let tr = m.trace().abs();
    if tr <= 2.0 {
        return 0.0;
    }
    let radius = 0.5 * (tr + (tr * tr - 4.0).sqrt());
    radius.ln() / period
}

/// True when `theta` lies within `tol` of a rational with denominator at most `qmax`.
pub fn near_rational(theta: f64, tol: f64, qmax: u32) -> bool {
    (1..=qmax).any(|q| {
        let x = theta * q as f64;
        (x - x.round()).abs() < tol * q as f64
    })
}

/// `sup_t exp((d(u(E,t), i) − d(u(E,t0), i)) / 2)` over sampled basepoints.
pub fn growth_functional(v: &dyn Periodic, e: f64, t0: f64, samples: usize) -> Result<f64> {
    let ts: Vec<f64> = v.basepoints(samples.max(1024)).into_iter().map(|s| t0 + s).collect();
    let us = center_curve_at(v, e, &ts)?;
    let d0 = hyp_dist(us[0], HPoint::I);
    let sup = us.iter().map(|u| hyp_dist(*u, HPoint::I)).fold(f64::NEG_INFINITY, f64::max);
    Ok(((sup - d0) / 2.0).exp())
}

/// `inf_{|w|=1} sup_{t0 < t ≤ t0 + horizon·T} ‖A(E, t0, t) w‖` over `directions`
/// directions, stepping through every integer site of a discrete potential.
pub fn brute_force_minimax(v: &DiscretePeriodic, e: f64, t0: i64, directions: usize, horizon: usize) -> f64 {
    let steps = horizon * v.len();
    let mut sup = vec![0.0f64; directions];
    let mut ws: Vec<(f64, f64)> = (0..directions)
        .map(|k| {
            let a = PI * k as f64 / directions as f64;
            (a.cos(), a.sin())
        })
        .collect();
    for k in 0..steps as i64 {
        let x = e - v.at(t0 + k);
        for (w, s) in ws.iter_mut().zip(sup.iter_mut()) {
            *w = (x * w.0 - w.1, w.0);
            *s = s.max(w.0.hypot(w.1));
        }
    }
    sup.into_iter().fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, Serialize)]
pub struct BlochPair {
    pub energy: f64,
    pub theta: Turns,
    /// `u(E, n)` for `n = -1, 0, …, N₁ − 1`.
    pub profile: Vec<Complex64>,
    pub wronskian: Complex64,
}

impl BlochPair {
    /// `u(E, n)` for any integer `n`, using the Bloch factor outside the stored period.
    pub fn at(&self, n: i64) -> Complex64 {
        let period = (self.profile.len() - 1) as i64;
        let k = n.div_euclid(period);
        let r = n.rem_euclid(period);
        let phase = Complex64::from_polar(1.0, 2.0 * PI * self.theta.value() * k as f64);
        // r = 0 is stored at index 1; r = period − 1 sits one before the next copy's start
        phase * self.profile[(r + 1) as usize]
    }
}

/// Bloch solution `u(E, ·)` with `u(E, n + N₁) = e^{2πiΘ} u(E, n)` and Wronskian `i`.
pub fn bloch_pair(v: &DiscretePeriodic, e: f64) -> Result<BlochPair> {
    let n1 = v.len() as i64;
    let m = transfer_discrete(|k| v.at(k), e, 0, n1);
    let z = fixed_point(&m)?;
    let theta = rotation_angle(&m)?;
    let scale = 1.0 / (2.0 * z.im).sqrt();
    let mut prev = Complex64::new(scale, 0.0);
    let mut cur = Complex64::new(z.re * scale, z.im * scale);
    let wronskian = cur * prev.conj() - cur.conj() * prev;
    let mut profile = vec![prev, cur];
    for k in 0..n1 - 1 {
        let next = cur * (e - v.at(k)) - prev;
        prev = cur;
        cur = next;
        profile.push(cur);
    }
    Ok(BlochPair { energy: e, theta, profile, wronskian })
}

/// `|u(E, n−1)|² + |u(E, n)|²` for the normalized Bloch solution.
fn bloch_weight(v: &DiscretePeriodic, e: f64, n: i64) -> Result<f64> {
    let b = bloch_pair(v, e)?;
    Ok(b.at(n - 1).norm_sqr() + b.at(n).norm_sqr())
}

/// `(1/2π) ∫_Σ (|u(E,n−1)|² + |u(E,n)|²) dE`.
pub fn spectral_parseval(v: &DiscretePeriodic, n: i64, quad_points: usize) -> Result<f64> {
    let (lo, hi) = spectral_hull(v);
    let bands = band_spectrum(v, lo - 1.0, hi + 1.0, 1e-13)?;
    let mut total = 0.0;
    for &(a, b) in &bands.bands {
        let rule = band_rule(a, b, quad_points);
        let vals: Vec<f64> = rule
            .par_iter()
            .map(|&(e, w)| bloch_weight(v, e, n).map(|x| w * x).unwrap_or(0.0))
            .collect();
        total += vals.iter().sum::<f64>();
    }
    Ok(total / (2.0 * PI))
}

/// `(1/4π) ∫_Λ (‖A(E,m,n)‖ + ‖A(E,m,n)‖⁻¹) dE`.
pub fn band_norm_bound(v: &dyn Periodic, m: f64, n: f64, bands: &BandSet, quad_points: usize) -> Result<f64> {
    let mut total = 0.0;
    for &(a, b) in &bands.bands {
        let rule = band_rule(a, b, quad_points);
        let vals: Vec<f64> = rule
            .par_iter()
            .map(|&(e, w)| {
                let t = v.transfer(e, m, n)?;
                Ok(w * (t.frobenius_sq() + 2.0).sqrt())
            })
            .collect::<Result<_>>()?;
        total += vals.iter().sum::<f64>();
    }
    Ok(total / (4.0 * PI))
}

/// Spectral density of the shifted potential `V_s`: `1 / Im u[V](E, s)`.
pub fn shift_density(v: &dyn Periodic, e: f64, s: f64) -> Result<f64> {
    Ok(1.0 / fixed_point(&v.monodromy(e, s)?)?.im)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniformnessReport {
    pub pass: bool,
    pub worst_s: f64,
    pub worst_deficit: f64,
    pub deficits: Vec<(f64, f64)>,
}

/// Mass of `μ_{V_s}` on `(−∞, M]` carried where the density is at least `c`.
///
/// Each band is sampled on its edge rule, crossings of the level `c` are located by
/// bisection, and the density is integrated over the super-level pieces.
pub fn truncation_deficit(v: &dyn Periodic, bands: &BandSet, c: f64, s: f64, quad_points: usize) -> Result<f64> {
    let density = |e: f64| match shift_density(v, e, s) {
        Ok(d) => Ok(d),
        Err(Error::NotElliptic { .. }) => Ok(f64::INFINITY),
        Err(err) => Err(err),
    };
    let mut total = 0.0;
    for &(a, b) in &bands.bands {
        let mut cuts = vec![(a, true)];
        let probes: Vec<f64> = band_rule(a, b, quad_points).into_iter().map(|(e, _)| e).collect();
        let mut prev_e = a;
        let mut prev_hi = density(a)? >= c;
        for &e in probes.iter().chain(std::iter::once(&b)) {
            let hi = density(e)? >= c;
            if hi != prev_hi {
                let f = |x: f64| density(x).map(|d| d - c).unwrap_or(f64::INFINITY);
                cuts.push((bisect(&f, prev_e, e, 1e-15 * b.abs().max(1.0)), false));
            }
            prev_e = e;
            prev_hi = hi;
        }
        cuts.push((b, true));
        for w in cuts.windows(2) {
            let ((p, p_edge), (q, q_edge)) = (w[0], w[1]);
            if q <= p || density(0.5 * (p + q))? < c {
                continue;
            }
            for (e, wt) in edge_rule(p, q, quad_points, p_edge, q_edge) {
                let d = density(e)?;
                // nodes that round onto a band edge carry no mass
                if d.is_finite() {
                    total += wt * d;
                }
            }
        }
    }
    Ok(total)
}

pub fn uniformness_check(
    v: &dyn Periodic,
    eps: f64,
    c: f64,
    m: f64,
    s_samples: usize,
    quad_points: usize,
) -> Result<UniformnessReport> {
    if !(eps > 0.0 && c > 0.0) || s_samples == 0 {
        return Err(Error::Domain("uniformness needs eps, C > 0 and at least one shift".into()));
    }
    let (lo, _) = spectral_hull(v);
    let bands = band_spectrum(v, lo - 1.0, m, 1e-12)?;
    let shifts: Vec<f64> = (0..s_samples).map(|k| v.period() * k as f64 / s_samples as f64).collect();
    let deficits: Vec<(f64, f64)> = shifts
        .par_iter()
        .map(|&s| truncation_deficit(v, &bands, c, s, quad_points).map(|d| (s, d)))
        .collect::<Result<_>>()?;
    let (worst_s, worst_deficit) = deficits
        .iter()
        .cloned()
        .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    Ok(UniformnessReport { pass: worst_deficit < eps, worst_s, worst_deficit, deficits })
}

/// Cosh distance from `u[V](E, t)` to `i` along sampled basepoints.
pub fn center_heights(v: &dyn Periodic, e: f64, ts: &[f64]) -> Result<Vec<f64>> {
    Ok(center_curve_at(v, e, ts)?.into_iter().map(|u| cosh_dist(u, HPoint::I)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::ContinuumPotential;

    #[test]
    fn free_discrete_band() {
        let v = DiscretePeriodic::free();
        let b = band_spectrum(&v, -3.0, 3.0, 1e-10).unwrap();
        assert_eq!(b.bands.len(), 1);
        assert!((b.bands[0].0 + 2.0).abs() < 1e-10 && (b.bands[0].1 - 2.0).abs() < 1e-10);
    }

    #[test]
    fn free_continuum_edges_including_closed_gaps() {
        let v = ContinuumPotential::free(1.0).unwrap();
        let b = band_spectrum(&v, 0.1, 50.0, 1e-10).unwrap();
        // edges at π² ≈ 9.87 and 4π² ≈ 39.5 split [0.1, 50] into three bands
        assert_eq!(b.bands.len(), 3, "{:?}", b.bands);
        assert!((b.bands[0].1 - PI * PI).abs() < 1e-8);
        assert!((b.bands[1].1 - 4.0 * PI * PI).abs() < 1e-8);
    }

    #[test]
    fn alternating_potential_has_gap() {
        let v = DiscretePeriodic::new(vec![0.0, 1.0]).unwrap();
        let b = band_spectrum(&v, -4.0, 5.0, 1e-12).unwrap();
        assert_eq!(b.bands.len(), 2);
        // tr = E(E−1) − 2, so the gap is (0, 1)
        assert!(b.bands[0].1.abs() < 1e-10 && (b.bands[1].0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn center_curves() {
        let v = DiscretePeriodic::free();
        let u = center_curve(&v, 0.0, 0).unwrap();
        assert!((u[0].re).abs() < 1e-15 && (u[0].im - 1.0).abs() < 1e-15);
        let c = ContinuumPotential::free(1.0).unwrap();
        for u in center_curve(&c, 3.0, 16).unwrap() {
            assert!(u.re.abs() < 1e-9 && (u.im - 3f64.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn ids_free() {
        let v = DiscretePeriodic::free();
        assert!(ids(&v, -2.0).unwrap().abs() < 1e-6);
        assert!((ids(&v, 2.0).unwrap() - 1.0).abs() < 1e-6);
        assert!((ids(&v, 0.0).unwrap() - 0.5).abs() < 1e-6);
        let c = ContinuumPotential::free(1.0).unwrap();
        assert!((ids_density(&c, 4.0, 64).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-8);
        assert!((ids(&c, 20.0).unwrap() - 20f64.sqrt() / PI).abs() < 1e-9);
    }

    #[test]
    fn lyapunov_examples() {
        let v = DiscretePeriodic::free();
        assert!((lyapunov(&v, 3.0).unwrap() - ((3.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 1e-10);
        assert_eq!(lyapunov(&v, 1.0).unwrap(), 0.0);
        let c = ContinuumPotential::free(1.0).unwrap();
        assert!((lyapunov(&c, -1.0).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn bloch_free_plane_wave() {
        let v = DiscretePeriodic::free();
        let th = 1.1f64;
        let b = bloch_pair(&v, 2.0 * th.cos()).unwrap();
        assert!((b.wronskian - Complex64::new(0.0, 1.0)).norm() < 1e-12);
        for n in -3..5 {
            assert!((b.at(n).norm_sqr() - 1.0 / (2.0 * th.sin())).abs() < 1e-9);
        }
    }

    #[test]
    fn bloch_factor() {
        let v = DiscretePeriodic::new(vec![0.3, -0.5, 1.2]).unwrap();
        let bands = band_spectrum(&v, -4.0, 4.0, 1e-12).unwrap();
        for &(a, b) in &bands.bands {
            let e = a + 0.37 * (b - a);
            let bp = bloch_pair(&v, e).unwrap();
            let f = Complex64::from_polar(1.0, 2.0 * PI * bp.theta.value());
            // direct recursion over two periods
            let mut prev = bp.profile[0];
            let mut cur = bp.profile[1];
            for k in 0..3 {
                let next = cur * (e - v.at(k)) - prev;
                prev = cur;
                cur = next;
            }
            assert!((cur - f * bp.profile[1]).norm() < 1e-9, "E={e}");
            assert!((prev - f * bp.profile[0]).norm() < 1e-9);
        }
    }

    #[test]
    fn parseval_free() {
        let v = DiscretePeriodic::free();
        assert!((spectral_parseval(&v, 0, 256).unwrap() - 1.0).abs() < 1e-6);
        let b = band_spectrum(&v, -3.0, 3.0, 1e-12).unwrap();
        assert!((band_norm_bound(&v, 0.0, 0.0, &b, 64).unwrap() - 2.0 / PI).abs() < 1e-9);
    }

    #[test]
    fn shift_density_and_uniformness_free() {
        let c = ContinuumPotential::free(1.0).unwrap();
        assert!((shift_density(&c, 4.0, 0.3).unwrap() - 0.5).abs() < 1e-10);
        let r = uniformness_check(&c, 0.1, 100.0, 30.0, 2, 512).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.worst_deficit - 2.0 / 100.0).abs() < 1e-3, "{}", r.worst_deficit);
    }
}

//! Deformation operators on symbolic potentials and the transfer-matrix identities
//! they satisfy.
//!
//! Every operator builds a new segment list or expression tree; nothing is resampled.

use std::f64::consts::{PI, TAU};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::potential::{CirclePotential, ContinuumPotential, DiscreteFamily, Periodic, Segment};
use crate::sl2geom::{energy_diag, fixed_point, hyp_dist, moebius, rotation_angle, rotation_raw, HPoint, Mat2};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaddingSpec {
    pub delta: f64,
    #[serde(rename = "N")]
    pub big_n: u32,
    pub n: u32,
}

impl PaddingSpec {
    pub fn new(delta: f64, big_n: u32, n: u32) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::validation("delta", format!("must be non-negative, got {delta}")));
        }
        if big_n == 0 || n == 0 {
            return Err(Error::validation("N/n", "must be at least 1"));
        }
        Ok(PaddingSpec { delta, big_n, n })
    }

    /// Gap inserted after block `j`: `δ·sin^{2N}(πj/2n)`.
    pub fn gap(&self, j: u32) -> f64 {
        self.delta * (PI * j as f64 / (2.0 * self.n as f64)).sin().powi(2 * self.big_n as i32)
    }

    pub fn padded_period(&self, base_period: f64) -> f64 {
        2.0 * (self.big_n * self.n) as f64 * base_period + (0..2 * self.n).map(|j| self.gap(j)).sum::<f64>()
    }

    /// Block starts `a_0, …, a_{2n}` (the last one equals the padded period).
    pub fn block_starts(&self, base_period: f64) -> Vec<f64> {
        let mut a = vec![0.0];
        for j in 0..2 * self.n {
            let last = *a.last().unwrap();
            a.push(last + self.big_n as f64 * base_period + self.gap(j));
        }
        a
    }
}

fn check_overlap(v: &ContinuumPotential, delta: f64) -> Result<()> {
    if delta > 0.0 && delta >= v.zero_nbhd() {
        return Err(Error::Overlap { delta, zero_nbhd: v.zero_nbhd() });
    }
    Ok(())
}

fn assemble(v: &ContinuumPotential, blocks: &[(u32, f64)], period: f64) -> Result<ContinuumPotential> {
    let mut segments = Vec::new();
    for &(copies, gap) in blocks {
        for _ in 0..copies {
            segments.extend(v.segments().iter().cloned());
        }
        if gap > 0.0 {
            segments.push(Segment::Gap(gap));
        }
    }
    ContinuumPotential::new(period, v.zero_nbhd(), v.bases().clone(), segments)
}

/// `(δ, N, n)`-padding: `2n` blocks of `N` copies, block `j` followed by a zero gap
/// of length `δ·sin^{2N}(πj/2n)`.
pub fn pad(v: &ContinuumPotential, spec: &PaddingSpec) -> Result<ContinuumPotential> {
    check_overlap(v, spec.delta)?;
    let blocks: Vec<(u32, f64)> = (0..2 * spec.n).map(|j| (spec.big_n, spec.gap(j))).collect();
    assemble(v, &blocks, spec.padded_period(v.period()))
}

/// `(δ, n)`-padding: `2n` copies with a gap `δ` after each copy of the second half.
pub fn pad_simple(v: &ContinuumPotential, delta: f64, n: u32) -> Result<ContinuumPotential> {
    check_overlap(v, delta)?;
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    let blocks: Vec<(u32, f64)> = (0..2 * n).map(|j| (1, if j >= n { delta } else { 0.0 })).collect();
    let period = 2.0 * n as f64 * v.period() + delta * n as f64;
    assemble(v, &blocks, period)
}

/// Block starts of the `(δ, n)`-padding, `a_0..=a_{2n}`.
pub fn pad_simple_starts(base_period: f64, delta: f64, n: u32) -> Vec<f64> {
    (0..=2 * n)
        .map(|j| j as f64 * base_period + if j > n { (j - n) as f64 * delta } else { 0.0 })
        .collect()
}

/// Exact zero-potential transfer over `len`: `D(E) R_{len√E/2π} D(E)⁻¹`.
pub fn gap_propagator(e: f64, len: f64) -> Result<Mat2> {
    let d = energy_diag(e)?;
    Ok(d * rotation_raw(len * e.sqrt() / TAU) * d.inverse())
}

/// `G(E, t) = D R_{δ√E sin^{2N}(πt)/2π} D⁻¹ A(E)^N`.
pub fn padded_block_matrix(v: &dyn Periodic, e: f64, spec: &PaddingSpec, t: f64) -> Result<Mat2> {
    let a = v.monodromy(e, 0.0)?;
    block_matrix_from(&a, e, spec, t)
}

fn block_matrix_from(a: &Mat2, e: f64, spec: &PaddingSpec, t: f64) -> Result<Mat2> {
    let len = spec.delta * (PI * t).sin().powi(2 * spec.big_n as i32);
    Ok(gap_propagator(e, len)? * a.pow(spec.big_n as u64))
}

/// Ordered product `G(E, (2n−1)/2n) ⋯ G(E, 0)`: the padded monodromy at 0.
pub fn padded_monodromy_product(v: &dyn Periodic, e: f64, spec: &PaddingSpec) -> Result<Mat2> {
    let a = v.monodromy(e, 0.0)?;
    let mut acc = Mat2::IDENTITY;
    for j in 0..2 * spec.n {
        acc = (block_matrix_from(&a, e, spec, j as f64 / (2.0 * spec.n as f64))? * acc).renormalized();
    }
    Ok(acc)
}

/// `λ(E) = exp(d(u(E), √E·i)/2)`.
pub fn padding_lambda(v: &dyn Periodic, e: f64) -> Result<f64> {
    let u = fixed_point(&v.monodromy(e, 0.0)?)?;
    Ok((hyp_dist(u, HPoint { re: 0.0, im: e.sqrt() }) / 2.0).exp())
}

/// Closed-form `tr G(E, t)`.
pub fn padded_trace_formula(v: &dyn Periodic, e: f64, spec: &PaddingSpec, t: f64) -> Result<f64> {
    let m = v.monodromy(e, 0.0)?;
    let theta = rotation_angle(&m)?.value();
    let lambda = padding_lambda(v, e)?;
    let phi = spec.delta * e.sqrt() * (PI * t).sin().powi(2 * spec.big_n as i32);
    let psi = TAU * spec.big_n as f64 * theta;
    Ok(2.0 * (phi + psi).cos() - (lambda - 1.0 / lambda).powi(2) * phi.sin() * psi.sin())
}

/// Coefficients `(a, b, c)` of the quadratic whose upper root is `w′(E)`.
pub fn half_turn_quadratic(lambda: f64, delta: f64, e: f64, n_theta: f64) -> (f64, f64, f64) {
    let (sp, cp) = (delta * e.sqrt()).sin_cos();
    let (ss, cs) = (TAU * n_theta).sin_cos();
    let l2 = lambda * lambda;
    let a = cp * ss + sp * cs / l2;
    let b = (l2 - 1.0 / l2) * sp * ss;
    let c = cp * ss + l2 * sp * cs;
    (a, b, c)
}

/// `Im w′(E)` from the explicit closed form.
pub fn half_turn_height(lambda: f64, delta: f64, e: f64, n_theta: f64) -> f64 {
    let (sp, cp) = (delta * e.sqrt()).sin_cos();
    let (ss, cs) = (TAU * n_theta).sin_cos();
    let l2 = lambda * lambda;
    let a = cp * ss + sp * cs / l2;
    let k = l2 - 1.0 / l2;
    (1.0 + k * sp * cs / a - k * k * sp * sp * ss * ss / (4.0 * a * a)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HalfTurn {
    /// Root of the normalized quadratic.
    pub normalized: HPoint,
    /// The same point carried back to the coordinates of `G(E, 1/2)`.
    pub fixed: HPoint,
}

/// Fixed point of `G(E, 1/2)` through the closed-form quadratic.
///
/// `Q = 𝔅(A)·D(E)` is split as `R₁ D₀ R₂`; the quadratic root `w′` is mapped back by `𝔅(A)⁻¹ R₁`.
pub fn half_turn_fixed_point(v: &dyn Periodic, e: f64, spec: &PaddingSpec) -> Result<HalfTurn> {
    let m = v.monodromy(e, 0.0)?;
    let u = fixed_point(&m)?;
    let theta = rotation_angle(&m)?.value();
    let b = crate::sl2geom::conjugator(&m)?;
    let q = b * energy_diag(e)?;
    let polar = q.polar();
    let lambda = polar.sigma;
    let (qa, qb, qc) = half_turn_quadratic(lambda, spec.delta, e, spec.big_n as f64 * theta);
    let disc = 4.0 * qa * qc - qb * qb;
    if !(disc > 0.0) || qa == 0.0 {
        return Err(Error::NotElliptic { trace: padded_trace_formula(v, e, spec, 0.5)? });
    }
    let normalized = HPoint { re: -qb / (2.0 * qa), im: disc.sqrt() / (2.0 * qa.abs()) };
    let back = b.inverse() * crate::sl2geom::rotation(polar.outer);
    let fixed = moebius(&back, normalized)?;
    debug_assert!(hyp_dist(u, moebius(&back, HPoint::I)?) < 1e-6);
    Ok(HalfTurn { normalized, fixed })
}

fn wrap_j(n1: usize) -> Expr {
    Expr::J.modulo(n1 as f64)
}

/// `n`-repetition: the same family read with potential period `n·N₁`.
pub fn repeat_family(f: &DiscreteFamily, n: usize) -> Result<DiscreteFamily> {
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    if n == 1 {
        return Ok(f.clone());
    }
    let expr = f.expr.clone().substitute(Expr::T, wrap_j(f.n1));
    Ok(DiscreteFamily { n0: f.n0, n1: f.n1 * n, expr })
}

/// `n`-twist: `𝒱′(t, kN₁ + l) = 𝒱(t + N₀k/n, l)`.
pub fn twist_family(f: &DiscreteFamily, n: usize) -> Result<DiscreteFamily> {
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    if n == 1 {
        return Ok(f.clone());
    }
    let block = Expr::J.scaled(1.0 / f.n1 as f64).floor();
    let t = Expr::sum(vec![Expr::T, block.scaled(f.n0 / n as f64)]);
    let expr = f.expr.clone().substitute(t, wrap_j(f.n1));
    Ok(DiscreteFamily { n0: f.n0, n1: f.n1 * n, expr })
}

/// `(δ, n)`-slide: period `2nN₀` in `t`, `3N₁` in `j`; inside the window around `nN₀`
/// the last third is read at `t + δΨ(t − nN₀)`.
pub fn slide_family(f: &DiscreteFamily, delta: f64, n: usize) -> Result<DiscreteFamily> {
    if f.n1 < 3 {
        return Err(Error::Arity { n1: f.n1 });
    }
    if !(delta >= 0.0) || n == 0 {
        return Err(Error::validation("delta/n", "need delta >= 0 and n >= 1"));
    }
    let n0 = 2.0 * n as f64 * f.n0;
    let centre = n as f64 * f.n0;
    let last_third = Expr::J.affine(1.0, -2.0 * f.n1 as f64).step();
    let window = Expr::T.modulo(n0).affine(1.0, -centre).plateau();
    let t = Expr::sum(vec![Expr::T, Expr::product(vec![Expr::Const(delta), last_third, window])]);
    let expr = f.expr.clone().substitute(t, wrap_j(f.n1));
    Ok(DiscreteFamily { n0, n1: 3 * f.n1, expr })
}

/// `n`-crumbling of a potential on `R/NZ`, giving a potential on `R/3nNZ`.
pub fn crumble(v: &CirclePotential, n: usize) -> Result<CirclePotential> {
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    let big_n = v.n as f64;
    let nf = n as f64;
    let period = 3.0 * nf * big_n;
    let x = Expr::T.modulo(period);
    let at = |arg: Expr| v.expr.clone().substitute(arg.modulo(big_n), Expr::Const(0.0));
    let first = at(x.clone().scaled((nf + 1.0) / nf));
    let second = at(x.clone().affine((2.0 * nf + 1.0) / (2.0 * nf), -(2.0 * nf + 1.0) * big_n / 2.0));
    let in_first = Expr::sum(vec![Expr::Const(nf * big_n), x.scaled(-1.0)]).step();
    let in_second = Expr::sum(vec![Expr::Const(1.0), in_first.clone().scaled(-1.0)]);
    let expr = Expr::sum(vec![Expr::product(vec![in_first, first]), Expr::product(vec![in_second, second])]);
    Ok(CirclePotential { n: 3 * n * v.n, expr })
}

/// `v(t, j) = 𝒱(t − j·a, j)` with `a = shift·N₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub family: DiscreteFamily,
    /// `a / N₀` as an exact fraction.
    pub shift: Ratio<i64>,
    pub sampling: Expr,
}

impl Sampling {
    pub fn a(&self) -> f64 {
        *self.shift.numer() as f64 / *self.shift.denom() as f64 * self.family.n0
    }

    pub fn eval(&self, t: f64, j: i64) -> f64 {
        self.sampling.eval(t, j as f64)
    }
}

/// Sampling function of a family for the rational shift `a = shift·N₀`.
pub fn family_to_sampling(f: &DiscreteFamily, shift: Ratio<i64>) -> Result<Sampling> {
    if !(shift * Ratio::from_integer(f.n1 as i64)).is_integer() {
        return Err(Error::Domain(format!("a·N₁/N₀ = {} is not an integer", shift * Ratio::from_integer(f.n1 as i64))));
    }
    let a = *shift.numer() as f64 / *shift.denom() as f64 * f.n0;
    let sampling = f.expr.clone().substitute(Expr::sum(vec![Expr::T, Expr::J.scaled(-a)]), wrap_j(f.n1));
    Ok(Sampling { family: f.clone(), shift, sampling })
}

/// `sup_{t, j} |v′(t, j) − v(t, j)|` on a `t_samples` grid over one parameter period
/// and all `j` in a common index period.
pub fn sampling_gap(new: &Sampling, old: &Sampling, t_samples: usize) -> f64 {
    let n0 = new.family.n0.max(old.family.n0);
    let jmax = lcm(new.family.n1, old.family.n1) as i64;
    let mut sup: f64 = 0.0;
    for k in 0..t_samples {
        let t = n0 * k as f64 / t_samples as f64;
        for j in 0..jmax {
            sup = sup.max((new.eval(t, j) - old.eval(t, j)).abs());
        }
    }
    sup
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Sup-norm data comparing two families on a common grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LipschitzData {
    pub sup_gap: f64,
    pub old_sup_dt: f64,
    pub new_sup_dt: f64,
}

/// `sup|𝒱′ − 𝒱|`, `sup|∂ₜ𝒱|` and `sup|∂ₜ𝒱′|` by central differences on a grid.
pub fn lipschitz_data(new: &DiscreteFamily, old: &DiscreteFamily, t_samples: usize) -> LipschitzData {
    let period = new.n0.max(old.n0);
    let jmax = lcm(new.n1, old.n1) as i64;
    let h = 1e-5 * old.n0.min(new.n0);
    let mut out = LipschitzData { sup_gap: 0.0, old_sup_dt: 0.0, new_sup_dt: 0.0 };
    for k in 0..t_samples {
        let t = period * k as f64 / t_samples as f64;
        for j in 0..jmax {
            out.sup_gap = out.sup_gap.max((new.eval(t, j) - old.eval(t, j)).abs());
            let dn = (new.eval(t + h, j) - new.eval(t - h, j)) / (2.0 * h);
            let dold = (old.eval(t + h, j) - old.eval(t - h, j)) / (2.0 * h);
            out.new_sup_dt = out.new_sup_dt.max(dn.abs());
            out.old_sup_dt = out.old_sup_dt.max(dold.abs());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::transfer_discrete;
    use crate::sl2geom::rotation;
    use crate::sl2geom::Turns;

    fn v0() -> ContinuumPotential {
        ContinuumPotential::single(1.0, 0.15, Expr::T.affine(1.0 / 0.7, -0.15 / 0.7).bump().scaled(6.0)).unwrap()
    }

    #[test]
    fn padding_period_and_starts() {
        let spec = PaddingSpec::new(0.1, 1, 1).unwrap();
        assert!((spec.padded_period(1.0) - 2.1).abs() < 1e-15);
        let p = pad(&v0(), &spec).unwrap();
        assert!((p.period() - 2.1).abs() < 1e-15);
        let a = spec.block_starts(1.0);
        for j in 0..2 {
            assert_eq!(a[j + 1] - a[j], 1.0 + spec.gap(j as u32));
        }
        assert!(matches!(pad(&v0(), &PaddingSpec::new(0.2, 1, 1).unwrap()), Err(Error::Overlap { .. })));
    }

    #[test]
    fn zero_padding_is_repetition() {
        let v = v0();
        let p = pad(&v, &PaddingSpec::new(0.0, 2, 2).unwrap()).unwrap();
        let m = p.monodromy(7.0, 0.0).unwrap();
        let want = v.monodromy(7.0, 0.0).unwrap().pow(8);
        assert!(m.sub(&want).max_abs_entry() < 1e-9);
        let s = pad_simple(&v, 0.0, 3).unwrap();
        assert!(s.monodromy(7.0, 0.0).unwrap().sub(&v.monodromy(7.0, 0.0).unwrap().pow(6)).max_abs_entry() < 1e-9);
    }

    #[test]
    fn pad_simple_layout() {
        let p = pad_simple(&v0(), 0.1, 1).unwrap();
        assert!((p.period() - 2.1).abs() < 1e-15);
        let a = pad_simple_starts(1.0, 0.2, 1);
        assert_eq!(a, vec![0.0, 1.0, 2.2]);
    }

    #[test]
    fn gap_propagator_examples() {
        assert!(gap_propagator(3.0, 0.0).unwrap().sub(&Mat2::IDENTITY).max_abs_entry() < 1e-15);
        let r = gap_propagator(1.0, 0.7).unwrap();
        assert!(r.sub(&rotation(Turns::new(0.7 / TAU))).max_abs_entry() < 1e-15);
        let f = crate::integrator::free_propagator(5.0, 0.3);
        assert!(gap_propagator(5.0, 0.3).unwrap().sub(&f).max_abs_entry() < 1e-12);
    }

    #[test]
    fn g_product_matches_padded_monodromy() {
        let v = v0();
        let spec = PaddingSpec::new(0.1, 2, 3).unwrap();
        let p = pad(&v, &spec).unwrap();
        for e in [3.0, 11.0, 30.0] {
            let direct = p.monodromy(e, 0.0).unwrap();
            let prod = padded_monodromy_product(&v, e, &spec).unwrap();
            let scale = direct.max_abs_entry().max(1.0);
            assert!(direct.sub(&prod).max_abs_entry() < 1e-8 * scale, "E={e}");
        }
    }

    #[test]
    fn repetition_twist_identities() {
        let f = DiscreteFamily::new(1.0, 2, Expr::sum(vec![Expr::T.cos(), Expr::J.scaled(0.3)])).unwrap();
        let r = repeat_family(&f, 3).unwrap();
        assert!(r.monodromy(0.4, 0.3, 0).sub(&f.monodromy(0.4, 0.3, 0).pow(3)).max_abs_entry() < 1e-12);
        let tw = twist_family(&f, 2).unwrap();
        let want = f.monodromy(0.4, 0.8, 0) * f.monodromy(0.4, 0.3, 0);
        assert!(tw.monodromy(0.4, 0.3, 0).sub(&want).max_abs_entry() < 1e-12);
        assert!((tw.eval(0.3 + 1.0, 3) - tw.eval(0.3, 3)).abs() < 1e-12);
    }

    #[test]
    fn slide_identities() {
        let f = DiscreteFamily::new(1.0, 3, Expr::sum(vec![Expr::T.cos(), Expr::J.scaled(0.2)])).unwrap();
        let s = slide_family(&f, 0.05, 2).unwrap();
        assert_eq!(s.n1, 9);
        assert_eq!(s.n0, 4.0);
        let t = 2.5;
        let inside = f.monodromy(0.1, t + 0.05, 0) * f.monodromy(0.1, t, 0).pow(2);
        assert!(s.monodromy(0.1, t, 0).sub(&inside).max_abs_entry() < 1e-12);
        let t = 0.3;
        assert!(s.monodromy(0.1, t, 0).sub(&f.monodromy(0.1, t, 0).pow(3)).max_abs_entry() < 1e-12);
        let f2 = DiscreteFamily::new(1.0, 2, Expr::T.cos()).unwrap();
        assert!(matches!(slide_family(&f2, 0.1, 1), Err(Error::Arity { n1: 2 })));
    }

    #[test]
    fn crumble_layout() {
        let v = CirclePotential { n: 2, expr: Expr::T.scaled(0.5).cos().affine(0.3, -0.3) };
        let c = crumble(&v, 3).unwrap();
        assert_eq!(c.n, 18);
        assert!((c.eval(0.0) - c.eval(18.0)).abs() < 1e-12);
        assert!((c.eval(6.0) - v.eval(0.0)).abs() < 1e-9);
        assert!((c.eval(6.0 - 1e-9) - c.eval(6.0 + 1e-9)).abs() < 1e-6);
        let m = transfer_discrete(|k| c.eval(0.4 + k as f64), 0.5, 0, 6);
        let want = transfer_discrete(|k| v.eval(4.0 / 3.0 * (0.4 + k as f64)), 0.5, 0, 6);
        assert!(m.sub(&want).max_abs_entry() < 1e-12);
    }

    #[test]
    fn sampling_round_trip() {
        let f = DiscreteFamily::new(1.0, 2, Expr::sum(vec![Expr::T.cos(), Expr::J.scaled(0.3)])).unwrap();
        let s = family_to_sampling(&f, Ratio::new(1, 2)).unwrap();
        for (t, j) in [(0.1, 0), (0.7, 1), (0.3, 5)] {
            assert!((s.eval(t + j as f64 * s.a(), j) - f.eval(t, j)).abs() < 1e-12);
        }
        assert!(family_to_sampling(&f, Ratio::new(1, 3)).is_err());
    }

    #[test]
    fn trace_formula_and_half_turn_root() {
        let v = v0();
        let bands = crate::cocycle::band_spectrum(&v, 0.0, 60.0, 1e-12).unwrap();
        for &(lo, hi) in &bands.bands {
            let e = lo + 0.41 * (hi - lo);
            if e <= 0.0 {
                continue;
            }
            let spec = PaddingSpec::new(0.07, 3, 4).unwrap();
            for t in [0.0, 0.2, 0.5] {
                let direct = padded_block_matrix(&v, e, &spec, t).unwrap().trace();
                let closed = padded_trace_formula(&v, e, &spec, t).unwrap();
                assert!((direct - closed).abs() < 1e-9, "E={e} t={t}: {direct} vs {closed}");
            }
            let g = padded_block_matrix(&v, e, &spec, 0.5).unwrap();
            if let (Ok(w), Ok(h)) = (fixed_point(&g), half_turn_fixed_point(&v, e, &spec)) {
                assert!(hyp_dist(w, h.fixed) < 1e-8, "E={e}");
            }
            let zero = half_turn_fixed_point(&v, e, &PaddingSpec::new(0.0, 3, 4).unwrap()).unwrap();
            let u = fixed_point(&v.monodromy(e, 0.0).unwrap()).unwrap();
            assert!(hyp_dist(zero.fixed, u) < 1e-9);
        }
    }
}

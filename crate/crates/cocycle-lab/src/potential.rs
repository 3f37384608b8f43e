//! Periodic potentials: segment-exact continuum potentials, finite discrete
//! periodic sequences, and one-parameter discrete families.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::integrator::{free_propagator, propagate};
use crate::sl2geom::{Chain, Mat2};

/// Anything with a periodic transfer-matrix cocycle.
pub trait Periodic: Send + Sync {
    fn period(&self) -> f64;

    fn is_discrete(&self) -> bool;

    /// Transfer matrix from `t` to `s`; discrete potentials round both to integers.
    fn transfer(&self, e: f64, t: f64, s: f64) -> Result<Mat2>;

    fn monodromy(&self, e: f64, base: f64) -> Result<Mat2> {
        self.transfer(e, base, base + self.period())
    }

    /// Lower and upper bounds for the potential values.
    fn value_bounds(&self) -> (f64, f64);

    /// Basepoints covering one period: integers for discrete potentials.
    fn basepoints(&self, samples: usize) -> Vec<f64> {
        if self.is_discrete() {
            (0..self.period() as usize).map(|k| k as f64).collect()
        } else {
            let n = samples.max(1);
            (0..n).map(|k| self.period() * k as f64 / n as f64).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub base: String,
    pub shift: f64,
    pub timescale: f64,
    pub len: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Gap(f64),
    Piece(Piece),
}

impl Segment {
    pub fn len(&self) -> f64 {
        match self {
            Segment::Gap(l) => *l,
            Segment::Piece(p) => p.len,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ContinuumRaw {
    period: f64,
    zero_nbhd: f64,
    bases: BTreeMap<String, Expr>,
    segments: Vec<Segment>,
}

/// Periodic potential on the line stored as gaps and reparameterized base profiles.
///
/// `zero_nbhd` is a length ε such that the potential vanishes on `[0, ε]` and on
/// `[T − ε, T]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ContinuumRaw", into = "ContinuumRaw")]
pub struct ContinuumPotential {
    period: f64,
    zero_nbhd: f64,
    bases: BTreeMap<String, Expr>,
    segments: Vec<Segment>,
    starts: Vec<f64>,
    piece_class: Vec<usize>,
    bounds: (f64, f64),
    max_step: f64,
}

impl PartialEq for ContinuumPotential {
    fn eq(&self, o: &Self) -> bool {
        self.period == o.period
            && self.zero_nbhd == o.zero_nbhd
            && self.bases == o.bases
            && self.segments == o.segments
    }
}

impl From<ContinuumPotential> for ContinuumRaw {
    fn from(v: ContinuumPotential) -> Self {
        ContinuumRaw { period: v.period, zero_nbhd: v.zero_nbhd, bases: v.bases, segments: v.segments }
    }
}

impl TryFrom<ContinuumRaw> for ContinuumPotential {
    type Error = Error;
    fn try_from(r: ContinuumRaw) -> Result<Self> {
        ContinuumPotential::new(r.period, r.zero_nbhd, r.bases, r.segments)
    }
}

impl ContinuumPotential {
    pub fn new(
        period: f64,
        zero_nbhd: f64,
        bases: BTreeMap<String, Expr>,
        segments: Vec<Segment>,
    ) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::validation("period", format!("must be positive, got {period}")));
        }
        if !(zero_nbhd >= 0.0) || zero_nbhd > 0.5 * period {
            return Err(Error::validation("zero_nbhd", format!("{zero_nbhd} outside [0, period/2]")));
        }
        if segments.is_empty() {
            return Err(Error::validation("segments", "empty segment list"));
        }
        for (name, e) in &bases {
            if !e.all_constants_finite() {
                return Err(Error::validation(format!("bases.{name}"), "non-finite constant"));
            }
        }
        let mut starts = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        let mut classes: Vec<(String, u64, u64, u64)> = Vec::new();
        let mut piece_class = Vec::with_capacity(segments.len());
        for (k, s) in segments.iter().enumerate() {
            let len = s.len();
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::validation(format!("segments[{k}]"), format!("length {len} is not positive")));
            }
            if let Segment::Piece(p) = s {
                if !bases.contains_key(&p.base) {
                    return Err(Error::validation(format!("segments[{k}].base"), format!("unknown base '{}'", p.base)));
                }
                if !(p.timescale > 0.0) || !p.shift.is_finite() {
                    return Err(Error::validation(format!("segments[{k}]"), "timescale must be positive and shift finite"));
                }
                let key = (p.base.clone(), p.shift.to_bits(), p.timescale.to_bits(), p.len.to_bits());
                let id = match classes.iter().position(|c| *c == key) {
                    Some(id) => id,
                    None => {
                        classes.push(key);
                        classes.len() - 1
                    }
                };
                piece_class.push(id);
            } else {
                piece_class.push(usize::MAX);
            }
            starts.push(acc);
            acc += len;
        }
        let deficit = period - acc;
        if deficit.abs() > 1e-9 * period.max(1.0) {
            return Err(Error::validation(
                "segments",
                format!("lengths sum to {acc}, period is {period} (deficit {deficit:e})"),
            ));
        }
        let mut v = ContinuumPotential {
            period,
            zero_nbhd,
            bases,
            segments,
            starts,
            piece_class,
            bounds: (0.0, 0.0),
            max_step: period.min(1.0) / 1024.0,
        };
        v.bounds = v.sample_bounds();
        v.check_zero_nbhd()?;
        Ok(v)
    }

    /// One-piece potential `base(t)` on `[0, period]`.
    pub fn single(period: f64, zero_nbhd: f64, base: Expr) -> Result<Self> {
        let mut bases = BTreeMap::new();
        bases.insert("v".to_string(), base);
        let seg = Segment::Piece(Piece { base: "v".into(), shift: 0.0, timescale: 1.0, len: period });
        Self::new(period, zero_nbhd, bases, vec![seg])
    }

    /// The zero potential with period `period`.
    pub fn free(period: f64) -> Result<Self> {
        Self::new(period, 0.5 * period, BTreeMap::new(), vec![Segment::Gap(period)])
    }

    pub fn zero_nbhd(&self) -> f64 {
        self.zero_nbhd
    }

    pub fn bases(&self) -> &BTreeMap<String, Expr> {
        &self.bases
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Start offsets of each segment within one period.
    pub fn segment_starts(&self) -> &[f64] {
        &self.starts
    }

    fn sample_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.segments {
            match s {
                Segment::Gap(_) => {
                    lo = lo.min(0.0);
                    hi = hi.max(0.0);
                }
                Segment::Piece(p) => {
                    let base = &self.bases[&p.base];
                    for k in 0..=256 {
                        let x = p.len * k as f64 / 256.0;
                        let v = base.eval(x * p.timescale + p.shift, 0.0);
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
        }
        (lo, hi)
    }

    fn check_zero_nbhd(&self) -> Result<()> {
        if self.zero_nbhd == 0.0 {
            return Ok(());
        }
        for k in 0..=64 {
            let x = self.zero_nbhd * k as f64 / 64.0;
            for t in [x, self.period - x] {
                let v = self.eval(t);
                if v.abs() > 1e-12 {
                    return Err(Error::validation(
                        "zero_nbhd",
                        format!("potential is {v:e} at t={t}, inside the declared zero neighbourhood"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn locate(&self, tau: f64) -> usize {
        self.starts.partition_point(|&s| s <= tau).saturating_sub(1)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let tau = t.rem_euclid(self.period);
        let k = self.locate(tau);
        self.eval_segment(k, tau - self.starts[k])
    }

    fn eval_segment(&self, k: usize, local: f64) -> f64 {
        match &self.segments[k] {
            Segment::Gap(_) => 0.0,
            Segment::Piece(p) => self.bases[&p.base].eval(local * p.timescale + p.shift, 0.0),
        }
    }

    fn segment_propagator(&self, k: usize, e: f64, from: f64, to: f64, cache: &mut Vec<(usize, Mat2)>) -> Result<Mat2> {
        let seg = &self.segments[k];
        let m = match seg {
            Segment::Gap(_) => free_propagator(e, to - from),
            Segment::Piece(p) => {
                let full = from == 0.0 && to == p.len;
                let class = self.piece_class[k];
                if full {
                    if let Some((_, m)) = cache.iter().find(|(c, _)| *c == class) {
                        return Ok(*m);
                    }
                }
                let base = &self.bases[&p.base];
                let q = |x: f64| e + base.eval(x * p.timescale + p.shift, 0.0);
                let vmag = self.bounds.0.abs().max(self.bounds.1.abs());
                let h = self.max_step.min(0.05 / (e.abs() + vmag + 1.0).sqrt());
                let m = propagate(&q, from, to, h);
                if full {
                    cache.push((class, m));
                }
                m
            }
        };
        if !m.is_finite() {
            let s = self.starts[k];
            return Err(Error::IntegrationFailure { from: s + from, to: s + to });
        }
        Ok(m)
    }

    /// Transfer across `[t, s]` with `s - t <= period`.
    fn sweep(&self, e: f64, t: f64, s: f64) -> Result<Mat2> {
        let mut offset = t - t.rem_euclid(self.period);
        let mut pos = t - offset;
        let mut k = self.locate(pos);
        let mut chain = Chain::new();
        let mut cache = Vec::new();
        while pos < s - offset {
            let end = s - offset;
            let seg_start = self.starts[k];
            let seg_len = self.segments[k].len();
            let seg_end = seg_start + seg_len;
            let stop = seg_end.min(end);
            let local_from = pos - seg_start;
            let local_to = if stop == seg_end { seg_len } else { stop - seg_start };
            if local_to > local_from {
                chain.push(self.segment_propagator(k, e, local_from, local_to, &mut cache)?);
            }
            pos = stop;
            if stop == seg_end {
                k += 1;
                if k == self.segments.len() {
                    k = 0;
                    offset += self.period;
                    pos = 0.0;
                }
            }
        }
        Ok(chain.finish())
    }
}

impl Periodic for ContinuumPotential {
    fn period(&self) -> f64 {
        self.period
    }

    fn is_discrete(&self) -> bool {
        false
    }

    fn transfer(&self, e: f64, t: f64, s: f64) -> Result<Mat2> {
        if s < t {
            return Ok(self.transfer(e, s, t)?.inverse());
        }
        if s == t {
            return Ok(Mat2::IDENTITY);
        }
        let periods = ((s - t) / self.period).floor();
        if periods >= 1.0 {
            let mono = self.sweep(e, t, t + self.period)?;
            let rest_start = t + periods * self.period;
            let rest = self.sweep(e, rest_start, s)?;
            return Ok((rest * mono.pow(periods as u64)).renormalized());
        }
        self.sweep(e, t, s)
    }

    fn value_bounds(&self) -> (f64, f64) {
        self.bounds
    }
}

/// A periodic sequence `V(k) = values[k mod N]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretePeriodic {
    pub values: Vec<f64>,
}

impl DiscretePeriodic {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("values", "need at least one finite value"));
        }
        Ok(DiscretePeriodic { values })
    }

    pub fn free() -> Self {
        DiscretePeriodic { values: vec![0.0] }
    }

    pub fn at(&self, k: i64) -> f64 {
        self.values[k.rem_euclid(self.values.len() as i64) as usize]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Ordered product of `[[E − V(k), −1], [1, 0]]` for `k = m..n−1`.
pub fn transfer_discrete<F: Fn(i64) -> f64>(v: F, e: f64, m: i64, n: i64) -> Mat2 {
    if n < m {
        return transfer_discrete(v, e, n, m).inverse();
    }
    let mut chain = Chain::new();
    for k in m..n {
        chain.push(Mat2::step(e - v(k)));
    }
    chain.finish()
}

impl Periodic for DiscretePeriodic {
    fn period(&self) -> f64 {
        self.values.len() as f64
    }

    fn is_discrete(&self) -> bool {
        true
    }

    fn transfer(&self, e: f64, t: f64, s: f64) -> Result<Mat2> {
        Ok(transfer_discrete(|k| self.at(k), e, t.round() as i64, s.round() as i64))
    }

    fn value_bounds(&self) -> (f64, f64) {
        let lo = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// One-parameter family `𝒱(t, j)` with parameter period `n0` and index period `n1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteFamily {
    pub n0: f64,
    pub n1: usize,
    pub expr: Expr,
}

impl DiscreteFamily {
    pub fn new(n0: f64, n1: usize, expr: Expr) -> Result<Self> {
        let f = DiscreteFamily { n0, n1, expr };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n0 > 0.0 && self.n0.is_finite()) {
            return Err(Error::validation("n0", format!("must be positive, got {}", self.n0)));
        }
        if self.n1 == 0 {
            return Err(Error::validation("n1", "must be at least 1"));
        }
        if !self.expr.all_constants_finite() {
            return Err(Error::validation("expr", "non-finite constant or modulus"));
        }
        let js = self.n1.min(16) as i64;
        for k in 0..16 {
            let t = self.n0 * (k as f64 + 0.318) / 16.0;
            for j in 0..js {
                let a = self.eval(t, j);
                let b = self.eval(t + self.n0, j);
                if !a.is_finite() || (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                    return Err(Error::validation(
                        "expr",
                        format!("not {}-periodic in t at (t={t}, j={j}): {a} vs {b}", self.n0),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, j: i64) -> f64 {
        self.expr.eval(t, j.rem_euclid(self.n1 as i64) as f64)
    }

    pub fn slice(&self, t: f64) -> DiscretePeriodic {
        DiscretePeriodic { values: (0..self.n1 as i64).map(|j| self.eval(t, j)).collect() }
    }

    /// `A[𝒱_t](E, m)`: the product over one index period starting at `m`.
    pub fn monodromy(&self, e: f64, t: f64, m: i64) -> Mat2 {
        transfer_discrete(|k| self.eval(t, k), e, m, m + self.n1 as i64)
    }
}

/// A potential on the circle `R/NZ`, viewed as the family `𝒱_t(j) = V(t + j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CirclePotential {
    pub n: usize,
    pub expr: Expr,
}

impl CirclePotential {
    pub fn eval(&self, t: f64) -> f64 {
        self.expr.eval(t.rem_euclid(self.n as f64), 0.0)
    }

    pub fn to_family(&self) -> DiscreteFamily {
        let lifted = Expr::Mod { x: Box::new(Expr::Add(vec![Expr::T, Expr::J])), m: self.n as f64 };
        DiscreteFamily {
            n0: self.n as f64,
            n1: self.n,
            expr: self.expr.clone().substitute(lifted, Expr::Const(0.0)),
        }
    }

    /// Reads `V(t) = 𝒱(t, 0)` back from a family with `n0 = n1`.
    pub fn from_family(f: &DiscreteFamily) -> Result<Self> {
        if (f.n0 - f.n1 as f64).abs() > 0.0 {
            return Err(Error::validation("n0", "circle potentials need n0 equal to n1"));
        }
        Ok(CirclePotential {
            n: f.n1,
            expr: f.expr.clone().substitute(Expr::T, Expr::Const(0.0)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump_potential() -> ContinuumPotential {
        ContinuumPotential::single(1.0, 0.15, Expr::T.affine(1.0 / 0.7, -0.15 / 0.7).bump().scaled(6.0)).unwrap()
    }

    #[test]
    fn free_continuum_trace() {
        let v = ContinuumPotential::free(1.0).unwrap();
        let e = std::f64::consts::PI.powi(2);
        let m = v.transfer(e, 0.0, 1.0).unwrap();
        assert!((m.trace() + 2.0).abs() < 1e-9);
        assert_eq!(v.transfer(3.0, 0.4, 0.4).unwrap(), Mat2::IDENTITY);
    }

    #[test]
    fn cocycle_property() {
        let v = bump_potential();
        for (r, t, s) in [(0.1, 0.5, 0.9), (-0.3, 0.7, 2.6), (0.05, 1.9, 4.3)] {
            let lhs = v.transfer(5.0, t, s).unwrap() * v.transfer(5.0, r, t).unwrap();
            let rhs = v.transfer(5.0, r, s).unwrap();
            assert!(lhs.sub(&rhs).max_abs_entry() < 1e-9, "{r} {t} {s}");
        }
    }

    #[test]
    fn trace_is_basepoint_independent() {
        let v = bump_potential();
        let a = v.monodromy(12.0, 0.0).unwrap().trace();
        let b = v.monodromy(12.0, 0.37).unwrap().trace();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn discrete_examples() {
        let m = transfer_discrete(|_| 0.0, 1.0, 0, 1);
        assert_eq!(m, Mat2::new(1.0, -1.0, 1.0, 0.0));
        let e = 0.7;
        let m = transfer_discrete(|_| 0.0, e, 3, 5);
        let want = Mat2::new(e * e - 1.0, -e, e, -1.0);
        assert!(m.sub(&want).max_abs_entry() < 1e-15);
    }

    #[test]
    fn validation_errors() {
        let bad = ContinuumPotential::new(1.0, 0.0, BTreeMap::new(), vec![Segment::Gap(-1.0), Segment::Gap(2.0)]);
        assert!(matches!(bad, Err(Error::Validation { ref field, .. }) if field == "segments[0]"));
        let bad = ContinuumPotential::new(1.0, 0.0, BTreeMap::new(), vec![Segment::Gap(0.7)]);
        match bad {
            Err(Error::Validation { field, reason }) => {
                assert_eq!(field, "segments");
                assert!(reason.contains("deficit"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let v = bump_potential();
        let s = serde_json::to_string(&v).unwrap();
        let back: ContinuumPotential = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert_eq!(serde_json::to_string(&back).unwrap(), s);
    }

    #[test]
    fn circle_family_shifts() {
        let c = CirclePotential { n: 3, expr: Expr::T.scaled(1.0 / 3.0).cos() };
        let f = c.to_family();
        assert!((f.eval(0.2, 2) - c.eval(2.2)).abs() < 1e-15);
        let back = CirclePotential::from_family(&f).unwrap();
        assert!((back.eval(1.3) - c.eval(1.3)).abs() < 1e-15);
    }
}

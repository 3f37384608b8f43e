//! Unimodular 2x2 matrices acting on the upper half-plane.
//!
//! Angles are measured in full turns, so `rotation(0.25)` is the quarter turn.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs with `2 - |tr|` below this are treated as non-elliptic.
pub const ELLIPTIC_MARGIN: f64 = 1e-12;

/// Product chains longer than this are rescaled back onto det = 1.
pub const RENORM_INTERVAL: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn diag(x: f64, y: f64) -> Self {
        Mat2::new(x, 0.0, 0.0, y)
    }

    /// Schrödinger step `[[x, -1], [1, 0]]`.
    pub fn step(x: f64) -> Self {
        Mat2::new(x, -1.0, 1.0, 0.0)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    pub fn inverse(&self) -> Self {
        let det = self.det();
        Mat2::new(self.d / det, -self.b / det, -self.c / det, self.a / det)
    }

    pub fn scale(&self, s: f64) -> Self {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn add(&self, o: &Mat2) -> Self {
        Mat2::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }

    pub fn sub(&self, o: &Mat2) -> Self {
        Mat2::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }

    /// Rescale by `1/sqrt(det)`; leaves matrices with non-positive det alone, and
    /// skips the rescale when `det − 1` is within the rounding noise of `ad − bc`.
    pub fn renormalized(&self) -> Self {
        let det = self.det();
        let noise = 4.0 * f64::EPSILON * self.frobenius_sq();
        if det > 0.0 && det.is_finite() && (det - 1.0).abs() > noise {
            self.scale(1.0 / det.sqrt())
        } else {
            *self
        }
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    /// Squared Frobenius norm.
    pub fn frobenius_sq(&self) -> f64 {
        self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d
    }

    /// Largest singular value.
    pub fn norm(&self) -> f64 {
        let f = self.frobenius_sq();
        let det = self.det().abs();
        let sum = (f + 2.0 * det).max(0.0).sqrt();
        let diff = (f - 2.0 * det).max(0.0).sqrt();
        0.5 * (sum + diff)
    }

    pub fn is_elliptic(&self) -> bool {
        2.0 - self.trace().abs() >= ELLIPTIC_MARGIN
    }

    /// `self^k` by repeated squaring, renormalized along the way.
    pub fn pow(&self, mut k: u64) -> Self {
        let mut base = *self;
        let mut acc = Mat2::IDENTITY;
        while k > 0 {
            if k & 1 == 1 {
                acc = (base * acc).renormalized();
            }
            base = (base * base).renormalized();
            k >>= 1;
        }
        acc
    }

    /// Polar form `R(phi1) diag(sigma, 1/sigma) R(phi2)` with sigma >= 1.
    pub fn polar(&self) -> Polar {
        let e = 0.5 * (self.a + self.d);
        let f = 0.5 * (self.a - self.d);
        let g = 0.5 * (self.c + self.b);
        let h = 0.5 * (self.c - self.b);
        let q = e.hypot(h);
        let r = f.hypot(g);
        let a1 = g.atan2(f);
        let a2 = h.atan2(e);
        Polar {
            outer: Turns::new(0.5 * (a2 + a1) / TAU),
            sigma: q + r,
            inner: Turns::new(0.5 * (a2 - a1) / TAU),
        }
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

/// Singular-value factorization into two rotations around a positive diagonal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Polar {
    pub outer: Turns,
    pub sigma: f64,
    pub inner: Turns,
}

impl Polar {
    pub fn matrix(&self) -> Mat2 {
        rotation(self.outer) * Mat2::diag(self.sigma, 1.0 / self.sigma) * rotation(self.inner)
    }
}

/// Left-multiplying accumulator that keeps det close to one.
#[derive(Clone, Debug)]
pub struct Chain {
    acc: Mat2,
    since_renorm: usize,
}

impl Default for Chain {
    fn default() -> Self {
        Chain { acc: Mat2::IDENTITY, since_renorm: 0 }
    }
}

impl Chain {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies `m` after everything accumulated so far.
    pub fn push(&mut self, m: Mat2) {
        self.acc = m * self.acc;
        self.since_renorm += 1;
        if self.since_renorm >= RENORM_INTERVAL {
            self.acc = self.acc.renormalized();
            self.since_renorm = 0;
        }
    }

    pub fn finish(self) -> Mat2 {
        if self.since_renorm > 0 {
            self.acc.renormalized()
        } else {
            self.acc
        }
    }

    pub fn current(&self) -> Mat2 {
        self.acc
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HPoint {
    pub re: f64,
    pub im: f64,
}

impl HPoint {
    pub const I: HPoint = HPoint { re: 0.0, im: 1.0 };

    pub fn new(re: f64, im: f64) -> Result<Self> {
        if im > 0.0 && re.is_finite() && im.is_finite() {
            Ok(HPoint { re, im })
        } else {
            Err(Error::Domain(format!("point {re}+{im}i is not in the upper half-plane")))
        }
    }
}

impl fmt::Display for HPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}i", self.re, self.im)
    }
}

/// Angle in full turns, canonical representative in [0, 1).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Turns(f64);

impl Turns {
    pub fn new(v: f64) -> Self {
        let r = v.rem_euclid(1.0);
        // rem_euclid can round up to exactly 1.0 for tiny negative inputs
        Turns(if r >= 1.0 { 0.0 } else { r })
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Signed distance to `other` in (-1/2, 1/2].
    pub fn signed_diff(self, other: Turns) -> f64 {
        let mut d = self.0 - other.0;
        if d > 0.5 {
            d -= 1.0;
        } else if d <= -0.5 {
            d += 1.0;
        }
        d
    }
}

pub fn rotation(theta: Turns) -> Mat2 {
    rotation_raw(theta.value())
}

/// Rotation by `2π·theta` without reducing `theta` first.
pub fn rotation_raw(theta: f64) -> Mat2 {
    let (s, c) = (TAU * theta).sin_cos();
    Mat2::new(c, -s, s, c)
}

pub fn moebius(m: &Mat2, z: HPoint) -> Result<HPoint> {
    let den_re = m.c * z.re + m.d;
    let den_im = m.c * z.im;
    let den = den_re * den_re + den_im * den_im;
    if den < 1e-300 {
        return Err(Error::NumericOverflow(format!("degenerate Möbius denominator at {z}")));
    }
    let num_re = m.a * z.re + m.b;
    let num_im = m.a * z.im;
    let re = (num_re * den_re + num_im * den_im) / den;
    let im = m.det() * z.im / den;
    if !(im > 0.0) || !re.is_finite() {
        return Err(Error::NumericOverflow(format!("Möbius image of {z} left the half-plane")));
    }
    Ok(HPoint { re, im })
}

fn not_elliptic(m: &Mat2) -> Error {
    Error::NotElliptic { trace: m.trace() }
}

/// Upper root of `c z² + (d − a) z − b = 0`.
pub fn fixed_point(m: &Mat2) -> Result<HPoint> {
    if !m.is_elliptic() {
        return Err(not_elliptic(m));
    }
    let disc = (m.d - m.a) * (m.d - m.a) + 4.0 * m.b * m.c;
    if !(disc < 0.0) || m.c == 0.0 {
        return Err(not_elliptic(m));
    }
    let re = (m.a - m.d) / (2.0 * m.c);
    let im = (-disc).sqrt() / (2.0 * m.c.abs());
    Ok(HPoint { re, im })
}

fn conjugator_at(u: HPoint) -> Mat2 {
    let s = 1.0 / u.im.sqrt();
    Mat2::new(s, -u.re * s, 0.0, u.im * s)
}

/// Upper-triangular conjugator sending `fixed_point(m)` to `i`.
pub fn conjugator(m: &Mat2) -> Result<Mat2> {
    Ok(conjugator_at(fixed_point(m)?))
}

/// Rotation number of the elliptic normal form, in (0,1/2) ∪ (1/2,1).
pub fn rotation_angle(m: &Mat2) -> Result<Turns> {
    let u = fixed_point(m)?;
    let b = conjugator_at(u);
    let r = b * *m * b.inverse();
    let disc = (m.d - m.a) * (m.d - m.a) + 4.0 * m.b * m.c;
    let det = m.det();
    // magnitude from the invariants, orientation from the normal form's first column
    let sin_abs = 0.5 * (-disc).sqrt() / det.sqrt();
    let cos = 0.5 * m.trace() / det.sqrt();
    let sin = if r.c >= 0.0 { sin_abs } else { -sin_abs };
    Ok(Turns::new(sin.atan2(cos) / TAU))
}

/// Normal form `(𝔅, Θ)` in one pass.
pub fn normal_form(m: &Mat2) -> Result<(Mat2, Turns)> {
    let u = fixed_point(m)?;
    let theta = rotation_angle(m)?;
    Ok((conjugator_at(u), theta))
}

pub fn hyp_dist(z: HPoint, w: HPoint) -> f64 {
    let dx = z.re - w.re;
    let dy = z.im - w.im;
    let chord = (dx * dx + dy * dy).sqrt();
    2.0 * (chord / (2.0 * (z.im * w.im).sqrt())).asinh()
}

/// `cosh` of the hyperbolic distance, cheaper than `hyp_dist` for comparisons.
pub fn cosh_dist(z: HPoint, w: HPoint) -> f64 {
    let dx = z.re - w.re;
    let dy = z.im - w.im;
    1.0 + (dx * dx + dy * dy) / (2.0 * z.im * w.im)
}

pub fn energy_diag(e: f64) -> Result<Mat2> {
    if !(e > 0.0) {
        return Err(Error::Domain(format!("energy_diag needs E > 0, got {e}")));
    }
    let q = e.powf(0.25);
    Ok(Mat2::diag(q, 1.0 / q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Mat2, b: &Mat2, tol: f64) -> bool {
        a.sub(b).max_abs_entry() <= tol
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation(Turns::new(0.0)), Mat2::IDENTITY);
        assert!(close(&rotation(Turns::new(0.25)), &Mat2::new(0.0, -1.0, 1.0, 0.0), 1e-15));
        let prod = rotation(Turns::new(1.0 / 3.0)) * rotation(Turns::new(1.0 / 6.0));
        assert!(close(&prod, &rotation(Turns::new(0.5)), 1e-12));
    }

    #[test]
    fn moebius_examples() {
        let z = moebius(&Mat2::diag(2.0, 0.5), HPoint::I).unwrap();
        assert!((z.re).abs() < 1e-15 && (z.im - 4.0).abs() < 1e-15);
        for k in 0..10 {
            let w = moebius(&rotation(Turns::new(k as f64 * 0.137)), HPoint::I).unwrap();
            assert!(hyp_dist(w, HPoint::I) < 1e-14);
        }
    }

    #[test]
    fn fixed_point_examples() {
        let u = fixed_point(&Mat2::new(1.0, -1.0, 1.0, 0.0)).unwrap();
        assert!((u.re - 0.5).abs() < 1e-15);
        assert!((u.im - 3f64.sqrt() / 2.0).abs() < 1e-15);
        let u = fixed_point(&Mat2::new(0.0, -1.0, 1.0, 0.0)).unwrap();
        assert!(hyp_dist(u, HPoint::I) < 1e-15);
        assert!(matches!(fixed_point(&Mat2::diag(2.0, 0.5)), Err(Error::NotElliptic { .. })));
    }

    #[test]
    fn rotation_angle_examples() {
        for th in [0.3, 0.7, 0.05, 0.95] {
            let got = rotation_angle(&rotation(Turns::new(th))).unwrap().value();
            assert!((got - th).abs() < 1e-12, "{th} -> {got}");
        }
        let got = rotation_angle(&Mat2::new(1.0, -1.0, 1.0, 0.0)).unwrap().value();
        assert!((got - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn conjugator_examples() {
        let b = conjugator(&rotation(Turns::new(0.2))).unwrap();
        assert!(close(&b, &Mat2::IDENTITY, 1e-14));
        let b = conjugator(&Mat2::new(1.0, -1.0, 1.0, 0.0)).unwrap();
        let s = 1.0 / (3f64.sqrt() / 2.0).sqrt();
        let want = Mat2::new(s, -0.5 * s, 0.0, 3f64.sqrt() / 2.0 * s);
        assert!(close(&b, &want, 1e-14));
    }

    #[test]
    fn distance_examples() {
        assert_eq!(hyp_dist(HPoint::I, HPoint::I), 0.0);
        let two_i = HPoint::new(0.0, 2.0).unwrap();
        assert!((hyp_dist(HPoint::I, two_i) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn energy_diag_examples() {
        assert_eq!(energy_diag(1.0).unwrap(), Mat2::IDENTITY);
        let d = energy_diag(16.0).unwrap();
        assert!(close(&d, &Mat2::diag(2.0, 0.5), 1e-15));
        let z = moebius(&energy_diag(7.0).unwrap(), HPoint::I).unwrap();
        assert!((z.im - 7f64.sqrt()).abs() < 1e-14);
        assert!(energy_diag(0.0).is_err());
    }

    #[test]
    fn polar_reconstructs() {
        let m = Mat2::new(2.0, 3.0, 1.0, 2.0);
        let p = m.polar();
        assert!(close(&p.matrix(), &m, 1e-13));
        assert!((p.sigma - m.norm()).abs() < 1e-13);
    }

    #[test]
    fn pow_matches_repeated_product() {
        let m = Mat2::new(0.3, -1.0, 1.0, 0.0);
        let mut acc = Mat2::IDENTITY;
        for _ in 0..13 {
            acc = m * acc;
        }
        assert!(close(&m.pow(13), &acc, 1e-12));
    }
}

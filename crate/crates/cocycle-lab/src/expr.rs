//! Closed-form expressions in a continuous parameter `t` and an integer index `j`.
//!
//! Expressions serialize to a small JSON tree; `Cos` is `cos(2π x)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    T,
    J,
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Cos(Box<Expr>),
    /// Smooth bump supported on (0,1), equal to 1 at 1/2.
    Bump(Box<Expr>),
    /// The slide profile: 0 below -3/4 and above 7/4, 1 on [-1/4, 5/4].
    Plateau(Box<Expr>),
    Floor(Box<Expr>),
    /// Euclidean remainder of `x` by a positive modulus.
    Mod { x: Box<Expr>, m: f64 },
    /// 1 for `x >= 0`, 0 otherwise.
    Step(Box<Expr>),
    /// Evaluates `body` with `t` and `j` replaced.
    Subst { t: Box<Expr>, j: Box<Expr>, body: Box<Expr> },
}

impl Expr {
    pub fn eval(&self, t: f64, j: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::T => t,
            Expr::J => j,
            Expr::Add(xs) => xs.iter().map(|x| x.eval(t, j)).sum(),
            Expr::Mul(xs) => xs.iter().map(|x| x.eval(t, j)).product(),
            Expr::Cos(x) => (TAU * x.eval(t, j)).cos(),
            Expr::Bump(x) => bump(x.eval(t, j)),
            Expr::Plateau(x) => plateau(x.eval(t, j)),
            Expr::Floor(x) => x.eval(t, j).floor(),
            Expr::Mod { x, m } => x.eval(t, j).rem_euclid(*m),
            Expr::Step(x) => {
                if x.eval(t, j) >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Expr::Subst { t: nt, j: nj, body } => body.eval(nt.eval(t, j), nj.eval(t, j)),
        }
    }

    pub fn constant(c: f64) -> Self {
        Expr::Const(c)
    }

    pub fn sum(xs: Vec<Expr>) -> Self {
        Expr::Add(xs)
    }

    pub fn product(xs: Vec<Expr>) -> Self {
        Expr::Mul(xs)
    }

    pub fn scaled(self, factor: f64) -> Self {
        Expr::Mul(vec![Expr::Const(factor), self])
    }

    /// `scale * x + shift` with `x` this expression.
    pub fn affine(self, scale: f64, shift: f64) -> Self {
        Expr::Add(vec![Expr::Mul(vec![Expr::Const(scale), self]), Expr::Const(shift)])
    }

    pub fn cos(self) -> Self {
        Expr::Cos(Box::new(self))
    }

    pub fn bump(self) -> Self {
        Expr::Bump(Box::new(self))
    }

    pub fn plateau(self) -> Self {
        Expr::Plateau(Box::new(self))
    }

    pub fn floor(self) -> Self {
        Expr::Floor(Box::new(self))
    }

    pub fn modulo(self, m: f64) -> Self {
        Expr::Mod { x: Box::new(self), m }
    }

    pub fn step(self) -> Self {
        Expr::Step(Box::new(self))
    }

    pub fn substitute(self, t: Expr, j: Expr) -> Self {
        Expr::Subst { t: Box::new(t), j: Box::new(j), body: Box::new(self) }
    }

    /// Number of nodes, used to reject runaway trees.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::T | Expr::J => 1,
            Expr::Add(xs) | Expr::Mul(xs) => 1 + xs.iter().map(Expr::size).sum::<usize>(),
            Expr::Cos(x) | Expr::Bump(x) | Expr::Plateau(x) | Expr::Floor(x) | Expr::Step(x) => {
                1 + x.size()
            }
            Expr::Mod { x, .. } => 1 + x.size(),
            Expr::Subst { t, j, body } => 1 + t.size() + j.size() + body.size(),
        }
    }

    pub fn all_constants_finite(&self) -> bool {
        match self {
            Expr::Const(c) => c.is_finite(),
            Expr::T | Expr::J => true,
            Expr::Add(xs) | Expr::Mul(xs) => xs.iter().all(Expr::all_constants_finite),
            Expr::Cos(x) | Expr::Bump(x) | Expr::Plateau(x) | Expr::Floor(x) | Expr::Step(x) => {
                x.all_constants_finite()
            }
            Expr::Mod { x, m } => *m > 0.0 && m.is_finite() && x.all_constants_finite(),
            Expr::Subst { t, j, body } => {
                t.all_constants_finite() && j.all_constants_finite() && body.all_constants_finite()
            }
        }
    }
}

fn cutoff(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 for x <= 0, 1 for x >= 1, C^∞ in between.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = cutoff(x);
        a / (a + cutoff(1.0 - x))
    }
}

pub fn bump(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    let y = 2.0 * x - 1.0;
    (1.0 - 1.0 / (1.0 - y * y)).exp()
}

pub fn plateau(x: f64) -> f64 {
    smooth_step(2.0 * (x + 0.75)) * smooth_step(2.0 * (1.75 - x))
}

/// sup |plateau'|, measured on a fine grid of the rising ramp.
pub fn plateau_lipschitz() -> f64 {
    let n = 20_000;
    let h = 0.5 / n as f64;
    (0..n)
        .map(|k| {
            let x = -0.75 + k as f64 * h;
            ((plateau(x + h) - plateau(x)) / h).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_layout() {
        for x in [-1.0, -0.8, -0.75, 1.75, 1.9, 2.0] {
            assert_eq!(plateau(x), 0.0, "x={x}");
        }
        for x in [-0.25, 0.0, 0.5, 1.0, 1.25] {
            assert_eq!(plateau(x), 1.0, "x={x}");
        }
        let mut prev = 0.0;
        for k in 0..=100 {
            let v = plateau(-0.75 + 0.005 * k as f64);
            assert!(v >= prev);
            prev = v;
        }
        let k1 = plateau_lipschitz();
        assert!(k1 > 2.0 && k1 < 10.0, "{k1}");
    }

    #[test]
    fn smooth_step_is_c1_at_knots() {
        let h = 1e-6;
        for x0 in [0.0, 1.0] {
            let left = (smooth_step(x0) - smooth_step(x0 - h)) / h;
            let right = (smooth_step(x0 + h) - smooth_step(x0)) / h;
            assert!((left - right).abs() < 1e-9);
        }
    }

    #[test]
    fn json_round_trip() {
        let e = Expr::T.affine(2.0, 0.1).cos().scaled(0.3).substitute(Expr::J, Expr::T);
        let s = serde_json::to_string(&e).unwrap();
        let back: Expr = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
        assert_eq!(serde_json::to_string(&back).unwrap(), s);
        assert_eq!(e.eval(0.25, 0.7), back.eval(0.25, 0.7));
    }

    #[test]
    fn subst_swaps_variables() {
        let e = Expr::T.substitute(Expr::J, Expr::T);
        assert_eq!(e.eval(1.0, 5.0), 5.0);
    }
}

//! Finite stages of solenoid towers.
//!
//! A stage is the circle `R/LZ` (Haar coordinate `x`) with a flow `dx/dt = w(x)`
//! and a sampling function `v`. Every stage descends from a base potential `V₀`
//! read at unit speed `w₀`, and `v` is always the lift of `v₀(x) = V₀(x/w₀)`. Time
//! changes are recorded as windows on which `ln w` is lowered by a ramped
//! plateau, so `1/w` is piecewise `exp(polynomial)` and flow times come out of
//! Gauss–Legendre quadrature essentially to rounding.

use std::sync::{Arc, OnceLock};

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deform::{family_to_sampling, sampling_gap, twist_family, PaddingSpec};
use crate::error::{Error, Result};
use crate::potential::{ContinuumPotential, DiscreteFamily, Periodic};
use crate::quad::gauss_legendre;

/// Points of the grids used for invariants and sup norms.
pub const GRID: usize = 4096;
const SEARCH_GRID: usize = 10_000;
const SEARCH_SAMPLES: usize = 256;

fn nodes() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(20))
}

fn ramp(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 + u * (6.0 * u - 15.0))
}

/// `ln w` is lowered by `amplitude` on `[lo + ramp, hi − ramp]`, with quintic ramps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
    pub ramp: f64,
    pub amplitude: f64,
}

impl Window {
    /// `−ρ(x)` contributed by this window.
    pub fn lift(&self, x: f64) -> f64 {
        if x <= self.lo || x >= self.hi {
            return 0.0;
        }
        self.amplitude * ramp((x - self.lo) / self.ramp) * ramp((self.hi - x) / self.ramp)
    }

    fn breakpoints(&self) -> [f64; 4] {
        [self.lo, self.lo + self.ramp, self.hi - self.ramp, self.hi]
    }

    fn shifted(&self, by: f64) -> Window {
        Window { lo: self.lo + by, hi: self.hi + by, ..*self }
    }
}

/// How a stage was obtained from its parent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StageRecord {
    Cover {
        multiplicity: usize,
    },
    Padding {
        spec: PaddingSpec,
        eps0: f64,
        windows: Vec<Window>,
    },
    Mixing {
        delta: f64,
        n: usize,
        eps0: f64,
        windows: Vec<Window>,
    },
}

impl StageRecord {
    pub fn multiplicity(&self) -> usize {
        match self {
            StageRecord::Cover { multiplicity } => *multiplicity,
            StageRecord::Padding { spec, .. } => 2 * (spec.big_n * spec.n) as usize,
            StageRecord::Mixing { n, .. } => 2 * n,
        }
    }

    fn windows(&self) -> &[Window] {
        match self {
            StageRecord::Cover { .. } => &[],
            StageRecord::Padding { windows, .. } | StageRecord::Mixing { windows, .. } => windows,
        }
    }
}

/// Serializable description of a tower: the base trace and the records of each stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    pub base: ContinuumPotential,
    pub speed: f64,
    pub stages: Vec<StageRecord>,
}

impl Tower {
    pub fn new(base: ContinuumPotential, speed: f64) -> Self {
        Tower { base, speed, stages: Vec::new() }
    }

    /// Rebuilds the top stage by replaying every record.
    pub fn build(&self) -> Result<TowerStage> {
        let mut stage = TowerStage::base(self.base.clone(), self.speed)?;
        for rec in &self.stages {
            stage = stage.child(rec.clone())?;
        }
        Ok(stage)
    }

    pub fn from_stage(stage: &TowerStage) -> Self {
        let mut stages = Vec::new();
        let mut cur = stage;
        while let (Some(rec), Some(parent)) = (&cur.record, &cur.parent) {
            stages.push(rec.clone());
            cur = parent;
        }
        stages.reverse();
        Tower { base: (*stage.base).clone(), speed: stage.speed, stages }
    }
}

#[derive(Clone, Debug)]
pub struct TowerStage {
    pub depth: usize,
    pub cover_multiplicity: usize,
    /// Haar circumference.
    pub length: f64,
    /// Flow period `∫ dx/w`.
    pub period: f64,
    pub speed: f64,
    pub base: Arc<ContinuumPotential>,
    pub parent: Option<Box<TowerStage>>,
    pub record: Option<StageRecord>,
    windows: Vec<Window>,
    breaks: Vec<f64>,
    active: Vec<Vec<usize>>,
    clock: Vec<f64>,
}

impl TowerStage {
    /// Depth-0 stage: `L = speed·T₀`, `w ≡ speed`, `v(x) = V₀(x/speed)`.
    pub fn base(base: ContinuumPotential, speed: f64) -> Result<Self> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::validation("speed", format!("must be positive, got {speed}")));
        }
        let length = speed * base.period();
        Self::assemble(0, 1, length, speed, Arc::new(base), Vec::new(), None, None)
    }

    /// The stage obtained by applying `record` to `self`.
    pub fn child(&self, record: StageRecord) -> Result<Self> {
        let m = record.multiplicity();
        if m == 0 {
            return Err(Error::validation("multiplicity", "must be at least 1"));
        }
        let mut windows = Vec::with_capacity(m * self.windows.len() + record.windows().len());
        for c in 0..m {
            windows.extend(self.windows.iter().map(|w| w.shifted(c as f64 * self.length)));
        }
        windows.extend_from_slice(record.windows());
        Self::assemble(
            self.depth + 1,
            m,
            m as f64 * self.length,
            self.speed,
            self.base.clone(),
            windows,
            Some(Box::new(self.clone())),
            Some(record),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        depth: usize,
        cover_multiplicity: usize,
        length: f64,
        speed: f64,
        base: Arc<ContinuumPotential>,
        mut windows: Vec<Window>,
        parent: Option<Box<TowerStage>>,
        record: Option<StageRecord>,
    ) -> Result<Self> {
        for (k, w) in windows.iter().enumerate() {
            let ok = w.lo >= 0.0
                && w.hi <= length * (1.0 + 1e-12)
                && w.hi > w.lo
                && w.ramp > 0.0
                && 2.0 * w.ramp <= (w.hi - w.lo) * (1.0 + 1e-12)
                && w.amplitude.is_finite();
            if !ok {
                return Err(Error::validation(format!("windows[{k}]"), format!("{w:?} does not fit the circle")));
            }
        }
        windows.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut breaks: Vec<f64> = vec![0.0, length];
        for w in &windows {
            breaks.extend(w.breakpoints().iter().map(|b| b.clamp(0.0, length)));
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let active: Vec<Vec<usize>> = breaks
            .windows(2)
            .map(|b| {
                let mid = 0.5 * (b[0] + b[1]);
                windows
                    .iter()
                    .enumerate()
                    .take_while(|(_, w)| w.lo < mid)
                    .filter(|(_, w)| w.hi > mid)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        let mut stage = TowerStage {
            depth,
            cover_multiplicity,
            length,
            period: 0.0,
            speed,
            base,
            parent,
            record,
            windows,
            breaks,
            active,
            clock: Vec::new(),
        };
        let mut clock = vec![0.0];
        for k in 0..stage.active.len() {
            let t = stage.time_in(k, stage.breaks[k], stage.breaks[k + 1], None);
            clock.push(clock[k] + t);
        }
        stage.period = *clock.last().unwrap();
        stage.clock = clock;
        Ok(stage)
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    fn interval(&self, x: f64) -> usize {
        self.breaks.partition_point(|&b| b <= x).clamp(1, self.breaks.len() - 1) - 1
    }

    /// `−ρ_total(x)`, so that `w(x) = speed·e^{−exponent(x)}`; `x ∈ [0, L]`.
    pub fn exponent(&self, x: f64) -> f64 {
        let k = self.interval(x);
        self.active[k].iter().map(|&i| self.windows[i].lift(x)).sum()
    }

    pub fn w(&self, x: f64) -> f64 {
        self.speed * (-self.exponent(x.rem_euclid(self.length))).exp()
    }

    pub fn v(&self, x: f64) -> f64 {
        self.base.eval(x.rem_euclid(self.length) / self.speed)
    }

    fn time_in(&self, k: usize, a: f64, b: f64, extra: Option<&Window>) -> f64 {
        if self.active[k].is_empty() && extra.is_none() {
            return (b - a) / self.speed;
        }
        let (xs, ws) = nodes();
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in xs.iter().zip(ws) {
            let y = mid + half * x;
            let mut e: f64 = self.active[k].iter().map(|&i| self.windows[i].lift(y)).sum();
            if let Some(win) = extra {
                e += win.lift(y);
            }
            s += w * e.exp();
        }
        s * half / self.speed
    }

    /// `∫_a^b dx / (e^{−extra} w)` for `0 ≤ a ≤ b ≤ L`.
    fn time_between(&self, a: f64, b: f64, extra: Option<&Window>) -> f64 {
        let mut cuts: Vec<f64> = vec![a, b];
        cuts.extend(self.breaks.iter().copied().filter(|&x| x > a && x < b));
        if let Some(win) = extra {
            cuts.extend(win.breakpoints().iter().copied().filter(|&x| x > a && x < b));
        }
        cuts.sort_by(f64::total_cmp);
        cuts.windows(2).map(|c| self.time_in(self.interval(0.5 * (c[0] + c[1])), c[0], c[1], extra)).sum()
    }

    /// Flow time from 0 to the unwrapped position `x`.
    pub fn clock_at(&self, x: f64) -> f64 {
        let q = (x / self.length).floor();
        let r = (x - q * self.length).clamp(0.0, self.length);
        let k = self.interval(r);
        q * self.period + self.clock[k] + self.time_in(k, self.breaks[k], r, None)
    }

    /// Unwrapped position reached at flow time `t` from 0.
    pub fn position_at(&self, t: f64) -> f64 {
        let q = (t / self.period).floor();
        let r = (t - q * self.period).clamp(0.0, self.period);
        let k = self.clock.partition_point(|&c| c <= r).clamp(1, self.clock.len() - 1) - 1;
        let (mut lo, mut hi) = (self.breaks[k], self.breaks[k + 1]);
        let goal = r - self.clock[k];
        let mut y = (lo + goal * self.speed).clamp(lo, hi);
        let tol = 1e-15 * self.length.max(1.0);
        for _ in 0..60 {
            let g = self.time_in(k, self.breaks[k], y, None) - goal;
            if g == 0.0 {
                break;
            }
            if g > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let next = y - g * self.speed * (-self.exponent(y)).exp();
            let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            let moved = (next - y).abs();
            y = next;
            if moved < tol {
                break;
            }
        }
        q * self.length + y
    }

    /// Unwrapped position `h(x, t)`.
    pub fn advance(&self, x: f64, t: f64) -> f64 {
        self.position_at(self.clock_at(x) + t)
    }

    /// Checks `w > 0` on the grid and `∫ 1/w = period` against an independent
    /// composite quadrature.
    pub fn validate(&self) -> Result<()> {
        let h = self.length / GRID as f64;
        let mut total = 0.0;
        for k in 0..GRID {
            let x = k as f64 * h;
            if !(self.w(x) > 0.0) {
                return Err(Error::validation("w", format!("not positive at x = {x}")));
            }
            total += self.time_between(x, x + h, None);
        }
        if (total - self.period).abs() > 1e-6 {
            return Err(Error::validation("period", format!("∫1/w = {total}, period = {}", self.period)));
        }
        Ok(())
    }
}

/// `h(x, t)` reduced to the stage circle.
pub fn flow_time(stage: &TowerStage, x: f64, t: f64) -> f64 {
    stage.advance(x, t).rem_euclid(stage.length)
}

/// `V(t) = v(F_t(0))` at `samples` equispaced times of `[0, t_max]`.
pub fn potential_trace(stage: &TowerStage, t_max: f64, samples: usize) -> Vec<(f64, f64)> {
    let denom = (samples.max(2) - 1) as f64;
    (0..samples)
        .into_par_iter()
        .map(|k| {
            let t = t_max * k as f64 / denom;
            (t, stage.v(stage.position_at(t)))
        })
        .collect()
}

/// Start of the trailing arc `{F_s(0) : T − ε₀ < s < T}` after checking the trace vanishes there.
fn trailing_arc(stage: &TowerStage, eps0: f64, delta: f64) -> Result<f64> {
    if !(eps0 > 0.0 && eps0 < stage.period) {
        return Err(Error::validation("eps0", format!("must lie in (0, {})", stage.period)));
    }
    if delta >= eps0 {
        return Err(Error::Overlap { delta, zero_nbhd: eps0 });
    }
    let t0 = stage.period - eps0;
    for k in 0..=64 {
        let t = t0 + eps0 * k as f64 / 64.0;
        let v = stage.v(stage.position_at(t.min(stage.period * (1.0 - 1e-15))));
        if v.abs() > 1e-12 {
            return Err(Error::validation("eps0", format!("trace is {v} at t = {t}, not zero")));
        }
    }
    Ok(stage.position_at(t0))
}

/// Window on `[lo, hi]` of the skeleton `stage` whose traversal time is `target`.
fn tune_window(stage: &TowerStage, lo: f64, hi: f64, target: f64, delta: f64, eps0: f64) -> Result<Window> {
    let ramp = (0.1f64).min(0.25 * delta / eps0) * (hi - lo);
    let make = |a: f64| Window { lo, hi, ramp, amplitude: a };
    let f = |a: f64| stage.time_between(lo, hi, Some(&make(a))) - target;
    let base = f(0.0);
    if base > 0.0 {
        return Err(Error::Realization(format!("window already takes {} > {target}", base + target)));
    }
    let (mut a_lo, mut a_hi) = (0.0, (target / (base + target)).ln().max(1e-3));
    while f(a_hi) < 0.0 {
        a_hi *= 2.0;
        if a_hi > 1e3 {
            return Err(Error::Realization("amplitude search did not bracket the target".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (a_lo + a_hi);
        if f(mid) < 0.0 {
            a_lo = mid;
        } else {
            a_hi = mid;
        }
        if a_hi - a_lo < 1e-15 {
            break;
        }
    }
    Ok(make(0.5 * (a_lo + a_hi)))
}

/// Largest `‖ρ‖_{C⁰}` among a record's windows.
pub fn rho_norm(record: &StageRecord) -> f64 {
    record.windows().iter().map(|w| w.amplitude.abs()).fold(0.0, f64::max)
}

/// `(δ, N, n)`-padding as a `2Nn`-cover whose copy `jN + N − 1` has its trailing
/// arc slowed to last `ε₀ + δ sin^{2N}(πj/2n)`.
pub fn realize_padding(stage: &TowerStage, spec: &PaddingSpec, eps0: f64) -> Result<TowerStage> {
    let start = trailing_arc(stage, eps0, spec.delta)?;
    let m = 2 * (spec.big_n * spec.n) as usize;
    let skeleton = stage.child(StageRecord::Cover { multiplicity: m })?;
    let mut windows = Vec::new();
    for j in 0..2 * spec.n {
        let gap = spec.gap(j);
        if gap <= 0.0 {
            continue;
        }
        let copy = (j * spec.big_n + spec.big_n - 1) as f64;
        let lo = copy * stage.length + start;
        let hi = (copy + 1.0) * stage.length;
        windows.push(tune_window(&skeleton, lo, hi, eps0 + gap, spec.delta, eps0)?);
    }
    let record = StageRecord::Padding { spec: *spec, eps0, windows };
    check_rho(&record, spec.delta, eps0)?;
    stage.child(record)
}

fn check_rho(record: &StageRecord, delta: f64, eps0: f64) -> Result<()> {
    let norm = rho_norm(record);
    if norm > delta / eps0 + 1e-9 {
        return Err(Error::Realization(format!("‖ρ‖ = {norm} exceeds δ/ε₀ = {}", delta / eps0)));
    }
    Ok(())
}

/// One mixing witness: `t_j` and the two arcs on which the projected displacement is
/// near 0 (`u`) and near `j/N` (`v`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixWitness {
    pub j: usize,
    pub t: f64,
    pub u_arc: (f64, f64),
    pub v_arc: (f64, f64),
    pub u_measure: f64,
    pub v_measure: f64,
}

#[derive(Clone, Debug)]
pub struct MixingRealization {
    pub stage: TowerStage,
    pub witnesses: Vec<MixWitness>,
}

/// `(δ, n)`-padding as a `2n`-cover whose second half is slowed by `δ` per copy,
/// with the witnesses `t_j = ⌊j/(δN)⌋(T + δ)` for `1 ≤ j ≤ N`.
pub fn realize_mixing(stage: &TowerStage, delta: f64, n: usize, eps0: f64, big_n: usize) -> Result<MixingRealization> {
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    let start = trailing_arc(stage, eps0, delta)?;
    let skeleton = stage.child(StageRecord::Cover { multiplicity: 2 * n })?;
    let mut windows = Vec::new();
    if delta > 0.0 {
        let first = tune_window(&skeleton, n as f64 * stage.length + start, (n + 1) as f64 * stage.length, eps0 + delta, delta, eps0)?;
        for c in n..2 * n {
            windows.push(first.shifted((c - n) as f64 * stage.length));
        }
    }
    let record = StageRecord::Mixing { delta, n, eps0, windows };
    check_rho(&record, delta, eps0)?;
    let child = stage.child(record)?;
    let witnesses = mixing_witnesses(&child, big_n)?;
    Ok(MixingRealization { stage: child, witnesses })
}

/// Witnesses of a stage built by [`realize_mixing`].
pub fn mixing_witnesses(child: &TowerStage, big_n: usize) -> Result<Vec<MixWitness>> {
    let (Some(StageRecord::Mixing { delta, n, .. }), Some(parent)) = (&child.record, &child.parent) else {
        return Err(Error::Domain("stage was not built by realize_mixing".into()));
    };
    let (delta, n) = (*delta, *n);
    let half_time = n as f64 * parent.period;
    let mut out = Vec::new();
    for j in 1..=big_n {
        let copies = if delta > 0.0 { (j as f64 / (delta * big_n as f64)).floor() } else { 0.0 };
        let t = copies * (parent.period + delta);
        let u_arc = (child.position_at(half_time), child.position_at((child.period - t).max(half_time)));
        let v_arc = (0.0, if half_time > t { child.position_at(half_time - t) } else { 0.0 });
        out.push(MixWitness {
            j,
            t,
            u_arc,
            v_arc,
            u_measure: (u_arc.1 - u_arc.0) / child.length,
            v_measure: (v_arc.1 - v_arc.0) / child.length,
        });
    }
    Ok(out)
}

/// Sup-norm closeness of a stage to the lift of an ancestor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LiftCloseness {
    pub flow_gap: f64,
    pub sample_gap: f64,
}

fn projection_ratio(child: &TowerStage, parent: &TowerStage) -> Result<usize> {
    let ratio = child.length / parent.length;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio || *child.base != *parent.base || child.speed != parent.speed {
        return Err(Error::Projection(format!(
            "stage of length {} does not cover a stage of length {}",
            child.length, parent.length
        )));
    }
    Ok(m as usize)
}

/// `sup |ln w_child − ln w_parent∘p|` and `sup |v_child − v_parent∘p|` on the grid
/// together with every window's midpoint.
pub fn lift_closeness(child: &TowerStage, parent: &TowerStage) -> Result<LiftCloseness> {
    projection_ratio(child, parent)?;
    let mut xs: Vec<f64> = (0..GRID).map(|k| child.length * k as f64 / GRID as f64).collect();
    xs.extend(child.windows.iter().map(|w| 0.5 * (w.lo + w.hi)));
    let (flow_gap, sample_gap) = xs
        .par_iter()
        .map(|&x| {
            let px = x.rem_euclid(parent.length);
            ((child.exponent(x) - parent.exponent(px)).abs(), (child.v(x) - parent.v(px)).abs())
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    Ok(LiftCloseness { flow_gap, sample_gap })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixednessRow {
    pub j: usize,
    pub t: f64,
    pub u_measure: f64,
    pub v_measure: f64,
    pub from_metadata: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixednessReport {
    pub pass: bool,
    pub per_j: Vec<MixednessRow>,
}

fn circle_dist(s: f64, target: f64, period: f64) -> f64 {
    let d = (s - target).rem_euclid(period);
    d.min(period - d)
}

/// Parent flow times `s(x)` with `p(F_t(x)) = F'_s(p(x))`, for `x` on a uniform grid.
fn displacements(child: &TowerStage, parent: &TowerStage, t: f64, samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|k| {
            let x = child.length * (k as f64 + 0.5) / samples as f64;
            let y = child.advance(x, t);
            let px = x.rem_euclid(parent.length);
            let py = y.rem_euclid(parent.length);
            let mut s = parent.clock_at(py) - parent.clock_at(px);
            if s < 0.0 {
                s += parent.period;
            }
            s
        })
        .collect()
}

fn window_measures(disp: &[f64], j: usize, big_n: usize, period: f64) -> (f64, f64) {
    let r = 1.0 / big_n as f64;
    let n = disp.len() as f64;
    let u = disp.iter().filter(|&&s| circle_dist(s, 0.0, period) < r).count() as f64 / n;
    let v = disp.iter().filter(|&&s| circle_dist(s, j as f64 * r, period) < r).count() as f64 / n;
    (u, v)
}

/// Certifies `(N, F')`-mixedness on a finite stage. Witnesses come from the
/// construction record when there is one, otherwise from a grid search over `t`.
pub fn mixedness_check(child: &TowerStage, parent: &TowerStage, big_n: usize) -> Result<MixednessReport> {
    projection_ratio(child, parent)?;
    if big_n == 0 {
        return Err(Error::validation("N", "must be at least 1"));
    }
    let from_record = match (&child.record, &child.parent) {
        (Some(StageRecord::Mixing { .. }), Some(p)) if p.length == parent.length => Some(mixing_witnesses(child, big_n)?),
        _ => None,
    };
    let witness_times: Vec<f64> = match &from_record {
        Some(ws) => ws.iter().map(|w| w.t).collect(),
        None => {
            let scored: Vec<Vec<f64>> = (1..=SEARCH_GRID)
                .into_par_iter()
                .map(|k| {
                    let t = child.period * k as f64 / SEARCH_GRID as f64;
                    let disp = displacements(child, parent, t, SEARCH_SAMPLES);
                    (1..=big_n)
                        .map(|j| {
                            let (u, v) = window_measures(&disp, j, big_n, parent.period);
                            u.min(v)
                        })
                        .collect()
                })
                .collect();
            (0..big_n)
                .map(|j| {
                    let best = (0..SEARCH_GRID)
                        .max_by(|&a, &b| scored[a][j].total_cmp(&scored[b][j]).then(b.cmp(&a)))
                        .unwrap();
                    child.period * (best + 1) as f64 / SEARCH_GRID as f64
                })
                .collect()
        }
    };
    let per_j: Vec<MixednessRow> = witness_times
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let disp = displacements(child, parent, t, GRID);
            let (u, v) = window_measures(&disp, i + 1, big_n, parent.period);
            MixednessRow { j: i + 1, t, u_measure: u, v_measure: v, from_metadata: from_record.is_some() }
        })
        .collect();
    let pass = per_j.iter().all(|r| r.u_measure > 1.0 / 3.0 && r.v_measure > 1.0 / 3.0);
    Ok(MixednessReport { pass, per_j })
}

/// Result of one discrete tower step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TowerStep {
    pub family: DiscreteFamily,
    /// `a′/N₀`.
    pub shift: Ratio<i64>,
    /// `sup |v′ − v|` of the sampling functions.
    pub sup_gap: f64,
    /// `(a′ − a)/N₀`, exactly `1/(nN₁)`.
    pub shift_change: Ratio<i64>,
}

/// Twists `family` by `n` and moves the sampling shift from `a` to `a + N₀/(nN₁)`.
/// Shifts are passed as `a/N₀`.
pub fn discrete_tower_step(family: &DiscreteFamily, shift: Ratio<i64>, n: usize, t_samples: usize) -> Result<TowerStep> {
    let old = family_to_sampling(family, shift)?;
    let twisted = twist_family(family, n)?;
    let change = Ratio::new(1, (n * family.n1) as i64);
    let next = shift + change;
    let new = family_to_sampling(&twisted, next)?;
    let sup_gap = sampling_gap(&new, &old, t_samples);
    Ok(TowerStep { family: twisted, shift: next, sup_gap, shift_change: change })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    fn bumpy(period: f64, eps: f64) -> ContinuumPotential {
        let inner = period - 2.0 * eps;
        let base = Expr::T.affine(1.0 / inner, -eps / inner).bump().scaled(1.5);
        ContinuumPotential::single(period, eps, base).unwrap()
    }

    #[test]
    fn unit_and_double_speed() {
        let s = TowerStage::base(ContinuumPotential::free(1.0).unwrap(), 1.0).unwrap();
        assert!((flow_time(&s, 0.3, 0.5) - 0.8).abs() < 1e-14);
        let s2 = TowerStage::base(ContinuumPotential::free(1.0).unwrap(), 2.0).unwrap();
        assert!((s2.period - 0.5 * s2.length).abs() < 1e-14);
        let back = flow_time(&s2, 0.0, s2.period);
        assert!(back.min(s2.length - back) < 1e-12);
    }

    #[test]
    fn padding_stage_is_the_padded_trace() {
        let v = bumpy(1.0, 0.2);
        let s0 = TowerStage::base(v.clone(), 1.0).unwrap();
        let spec = PaddingSpec::new(0.05, 2, 3).unwrap();
        let s1 = realize_padding(&s0, &spec, 0.2).unwrap();
        let padded = crate::deform::pad(&v, &spec).unwrap();
        assert!((s1.period - padded.period()).abs() < 1e-10);
        let worst = potential_trace(&s1, s1.period, 3001)
            .iter()
            .map(|&(t, x)| (x - padded.eval(t)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
        let close = lift_closeness(&s1, &s0).unwrap();
        assert!(close.flow_gap <= 0.05 / 0.2 + 1e-9 && close.sample_gap == 0.0);
        s1.validate().unwrap();
    }

    #[test]
    fn flow_is_additive() {
        let s0 = TowerStage::base(bumpy(1.0, 0.2), 1.0).unwrap();
        let s1 = realize_padding(&s0, &PaddingSpec::new(0.1, 1, 2).unwrap(), 0.2).unwrap();
        for &(x, t1, t2) in &[(0.1, 0.7, 1.9), (2.3, 3.3, -1.2), (3.9, 0.05, 5.0)] {
            let a = s1.advance(s1.advance(x, t1), t2);
            let b = s1.advance(x, t1 + t2);
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn mixing_stage_passes() {
        let v = bumpy(1.0, 0.2);
        let s0 = TowerStage::base(v.clone(), 1.0).unwrap();
        let mix = realize_mixing(&s0, 0.05, 70, 0.2, 4).unwrap();
        let simple = crate::deform::pad_simple(&v, 0.05, 70).unwrap();
        assert!((mix.stage.period - simple.period()).abs() < 1e-9);
        for w in &mix.witnesses {
            assert!(w.u_measure > 1.0 / 3.0 && w.v_measure > 1.0 / 3.0, "{w:?}");
        }
        let report = mixedness_check(&mix.stage, &s0, 4).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn pure_cover_is_not_mixed_at_large_n() {
        let s0 = TowerStage::base(ContinuumPotential::free(1.0).unwrap(), 1.0).unwrap();
        let s1 = s0.child(StageRecord::Cover { multiplicity: 4 }).unwrap();
        assert!(!mixedness_check(&s1, &s0, 8).unwrap().pass);
        let triv = mixedness_check(&s0, &s0, 1).unwrap();
        assert!(triv.pass);
    }

    #[test]
    fn tower_step_bookkeeping() {
        let f = DiscreteFamily::new(1.0, 2, Expr::T.cos().scaled(0.3)).unwrap();
        let step = discrete_tower_step(&f, Ratio::new(1, 2), 4, 64).unwrap();
        assert_eq!(step.shift_change, Ratio::new(1, 8));
        assert_eq!(step.shift, Ratio::new(5, 8));
    }
}

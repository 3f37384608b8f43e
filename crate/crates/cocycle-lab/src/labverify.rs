//! Desk-scale reruns of the padding pipeline and the Carleson sandbox.
//!
//! Every entry point returns a serializable report that echoes its
//! configuration, so a report file alone is enough to rerun it.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{band_spectrum, center_curve_at, ids, ids_density, lyapunov, spectral_hull, BandSet};
use crate::deform::{gap_propagator, repeat_family, slide_family, twist_family, PaddingSpec};
use crate::error::{Error, Result};
use crate::potential::{ContinuumPotential, DiscreteFamily, Periodic};
use crate::quad::edge_rule;
use crate::sl2geom::{fixed_point, hyp_dist, moebius, rotation_angle, rotation_raw, HPoint, Mat2};

// ---------------------------------------------------------------------------
// energy grids

/// Equal-measure cell midpoints of a band set.
fn band_grid(bands: &BandSet, count: usize) -> Vec<f64> {
    let total = bands.measure();
    if count == 0 || total <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(count);
    let mut it = bands.bands.iter();
    let mut current = it.next().copied();
    let mut offset = 0.0;
    for k in 0..count {
        let s = (k as f64 + 0.5) * total / count as f64;
        while let Some((a, b)) = current {
            if s <= offset + (b - a) {
                out.push(a + (s - offset));
                break;
            }
            offset += b - a;
            current = it.next().copied();
        }
    }
    out
}

fn bands_between(v: &dyn Periodic, lo: f64, hi: f64) -> Result<BandSet> {
    let bands = band_spectrum(v, lo, hi, 1e-11)?;
    let bands = bands
        .bands
        .iter()
        .filter(|(_, b)| *b > lo)
        .map(|&(a, b)| (a.max(lo), b.min(hi)))
        .filter(|(a, b)| b > a)
        .collect();
    Ok(BandSet { bands, tol: 1e-11 })
}

fn i_point() -> HPoint {
    HPoint::I
}

// ---------------------------------------------------------------------------
// padding pipeline

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma22Config {
    /// Energies are taken from `Σ ∩ [1/m, m]`.
    pub m: f64,
    pub xi: f64,
    pub c0: f64,
    pub delta: f64,
    pub kappa: f64,
    pub steps: usize,
    pub energy_grid: usize,
    /// Basepoint samples per period of the starting potential.
    pub samples: usize,
    pub big_n_start: u32,
    pub big_n_cap: u32,
    pub n_start: u32,
    pub n_cap: u32,
    pub gammas: Vec<f64>,
    /// Growth thresholds use `δ/(C′γ)`; `None` fits `C′` from the step's own exclusions.
    pub c_prime: Option<f64>,
}

impl Default for Lemma22Config {
    fn default() -> Self {
        Lemma22Config {
            m: 20.0,
            xi: 0.5,
            c0: 4.0,
            delta: 0.05,
            kappa: 1e-3,
            steps: 1,
            energy_grid: 2000,
            samples: 256,
            big_n_start: 128,
            big_n_cap: 1024,
            n_start: 16,
            n_cap: 65536,
            gammas: vec![0.05, 0.1, 0.2, 0.24],
            c_prime: None,
        }
    }
}

impl Lemma22Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 1.0) {
            return Err(Error::validation("m", "must exceed 1"));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::validation("delta", "must be non-negative"));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::validation("kappa", "must be positive"));
        }
        if self.delta > 0.0 && self.steps as f64 > self.xi / self.delta {
            return Err(Error::validation("steps", format!("{} exceeds xi/delta = {}", self.steps, self.xi / self.delta)));
        }
        if self.energy_grid == 0 || self.samples < 8 {
            return Err(Error::validation("energy_grid/samples", "grid must be non-empty and samples at least 8"));
        }
        if self.big_n_start == 0 || self.big_n_start > self.big_n_cap || self.n_start == 0 || self.n_start > self.n_cap {
            return Err(Error::validation("step caps", "need 0 < start <= cap for N and n"));
        }
        if self.gammas.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
            return Err(Error::validation("gammas", "each gamma must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Weighted samples of `d(u(E, t), i)` over one period.
type Profile = Vec<(f64, f64)>;

const PROFILE_BINS: usize = 48;
const CIRCLE_NODES: usize = 12;
/// Below this displacement the circle average uses its second-order expansion.
const SMALL_RADIUS: f64 = 2e-3;
const BLOCK_GAP_PROBES: usize = 64;

#[derive(Clone, Debug)]
struct Track {
    energy: f64,
    alive: bool,
    monodromy: Mat2,
    centre: HPoint,
    theta: f64,
    sup0: f64,
    avg0: f64,
    sup: f64,
    avg: f64,
    profile: Profile,
}

/// Step-0 state shared by runs that differ only in the padding parameters.
#[derive(Clone, Debug)]
pub struct Lemma22Start {
    config: Lemma22Config,
    measure: f64,
    c_shape: f64,
    step0_excluded: usize,
    tracks: Vec<Track>,
}

impl Lemma22Start {
    pub fn c_shape(&self) -> f64 {
        self.c_shape
    }

    pub fn retained(&self) -> usize {
        self.tracks.iter().filter(|t| t.alive).count()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Exclusions {
    pub non_elliptic: usize,
    pub block_hyperbolic: usize,
    pub drift: usize,
    pub shape: usize,
}

impl Exclusions {
    pub fn total(&self) -> usize {
        self.non_elliptic + self.block_hyperbolic + self.drift + self.shape
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthStat {
    pub gamma: f64,
    pub threshold: f64,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub big_n: u32,
    pub n: u32,
    pub orbit_dense_fraction: f64,
    /// `(n, excluded fraction)` for every `n` tried.
    pub n_trials: Vec<(u32, f64)>,
    pub retained_before: usize,
    pub exclusions: Exclusions,
    pub excluded_fraction: f64,
    pub excluded_measure: f64,
    pub measure_band: f64,
    pub c_prime: f64,
    pub gamma_grid: Vec<f64>,
    pub growth: Vec<GrowthStat>,
    pub max_drift: f64,
    pub max_avg_change: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyAverage {
    pub energy: f64,
    pub avg0: f64,
    pub avg: f64,
    pub sup0: f64,
    pub sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma22Report {
    pub config: Lemma22Config,
    pub delta: f64,
    pub xi: f64,
    pub c0: f64,
    pub m: f64,
    pub p: usize,
    pub spectrum_measure: f64,
    pub c_shape: f64,
    pub step0_excluded_fraction: f64,
    /// Largest step-0 time average over retained energies.
    pub c_step0: f64,
    pub avg_bound: f64,
    pub steps: Vec<StepRecord>,
    pub retained_fraction: f64,
    pub retained_measure: f64,
    pub sup_at_least_c0_fraction: f64,
    pub averages: Vec<EnergyAverage>,
    pub averages_bounded: bool,
}

impl Lemma22Report {
    /// One row per step.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,N,n,retained_before,excluded_fraction,excluded_measure,c_prime,max_drift,max_avg_change\n");
        for r in &self.steps {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.step, r.big_n, r.n, r.retained_before, r.excluded_fraction, r.excluded_measure, r.c_prime, r.max_drift, r.max_avg_change
            ));
        }
        s
    }
}

fn validate_v0(v0: &ContinuumPotential) -> Result<()> {
    let (lo, hi) = v0.value_bounds();
    if lo < -1e-12 {
        return Err(Error::validation("potential", format!("must be non-negative, minimum {lo}")));
    }
    if !(hi > lo) {
        return Err(Error::validation("potential", "must be non-constant"));
    }
    if !(v0.zero_nbhd() > 0.0) {
        return Err(Error::validation("zero_nbhd", "potential must vanish near 0"));
    }
    Ok(())
}

/// Step 0: energy grid, center curves and the shape constant.
pub fn prepare_lemma22(v0: &ContinuumPotential, config: &Lemma22Config) -> Result<Lemma22Start> {
    config.validate()?;
    validate_v0(v0)?;
    let bands = bands_between(v0, 1.0 / config.m, config.m)?;
    let energies = band_grid(&bands, config.energy_grid);
    if energies.is_empty() {
        return Err(Error::Collapse { step: 0 });
    }
    let period = v0.period();
    let ts: Vec<f64> = (0..config.samples).map(|k| period * k as f64 / config.samples as f64).collect();
    let rows: Vec<Option<(Track, f64)>> = energies
        .par_iter()
        .map(|&e| initial_track(v0, e, &ts))
        .collect();

    let count = energies.len();
    let cell = bands.measure() / count as f64;
    let allowed_loss = ((config.xi / 2.0) / cell).floor() as usize;
    let mut needs: Vec<f64> = rows.iter().map(|r| r.as_ref().map_or(f64::INFINITY, |(_, c)| *c)).collect();
    needs.sort_by(f64::total_cmp);
    let keep = count.saturating_sub(allowed_loss).max(1);
    let c_shape = needs[keep - 1] * (1.0 + 1e-9);
    if !c_shape.is_finite() {
        return Err(Error::Collapse { step: 0 });
    }
    let mut tracks = Vec::with_capacity(count);
    let mut excluded = 0;
    for (e, row) in energies.iter().zip(rows) {
        match row {
            Some((mut t, need)) => {
                t.alive = need < c_shape;
                if !t.alive {
                    excluded += 1;
                }
                tracks.push(t);
            }
            None => {
                excluded += 1;
                tracks.push(dead_track(*e));
            }
        }
    }
    Ok(Lemma22Start { config: config.clone(), measure: bands.measure(), c_shape, step0_excluded: excluded, tracks })
}

/// Step-0 track of one energy with the smallest shape constant admitting it.
fn initial_track(v0: &ContinuumPotential, e: f64, ts: &[f64]) -> Option<(Track, f64)> {
    let a = v0.monodromy(e, 0.0).ok()?;
    if !a.is_elliptic() {
        return None;
    }
    let us = center_curve_at(v0, e, ts).ok()?;
    let theta = rotation_angle(&a).ok()?.value();
    let weight = 1.0 / ts.len() as f64;
    let rho: Vec<f64> = us.iter().map(|u| hyp_dist(*u, i_point())).collect();
    let sup = rho.iter().cloned().fold(0.0, f64::max);
    let avg = rho.iter().sum::<f64>() * weight;
    let shape = hyp_dist(us[0], HPoint { re: 0.0, im: e.sqrt() });
    let need = if shape > 0.0 { shape.max(1.0 / shape).max(2.0 * sup) } else { f64::INFINITY };
    let profile = compress(rho.iter().map(|r| (*r, weight)).collect());
    let track = Track { energy: e, alive: true, monodromy: a, centre: us[0], theta, sup0: sup, avg0: avg, sup, avg, profile };
    Some((track, need))
}

/// Modelled `(sup, average)` of `d(u[V′](E, t), i)` after one padding of `v0`.
pub fn padded_stats_model(v0: &ContinuumPotential, e: f64, spec: &PaddingSpec, samples: usize) -> Result<(f64, f64)> {
    let ts: Vec<f64> = (0..samples).map(|k| v0.period() * k as f64 / samples as f64).collect();
    let (track, _) = initial_track(v0, e, &ts).ok_or(Error::NotElliptic { trace: v0.monodromy(e, 0.0)?.trace() })?;
    let a_n = track.monodromy.pow(spec.big_n as u64);
    let mut m = Mat2::IDENTITY;
    for (k, g) in block_runs(spec, e) {
        m = (gap_propagator(e, g)? * a_n.pow(k as u64) * m).renormalized();
    }
    if !m.is_elliptic() {
        return Err(Error::NotElliptic { trace: m.trace() });
    }
    let adv = advance(&track, spec, v0.period(), m, fixed_point(&m)?)?;
    Ok((adv.track.sup, adv.track.avg))
}

fn dead_track(e: f64) -> Track {
    Track {
        energy: e,
        alive: false,
        monodromy: Mat2::IDENTITY,
        centre: i_point(),
        theta: 0.0,
        sup0: 0.0,
        avg0: 0.0,
        sup: 0.0,
        avg: 0.0,
        profile: Vec::new(),
    }
}

/// Equal-weight quantile bins of a weighted sample.
fn compress(mut samples: Profile) -> Profile {
    samples.retain(|(_, w)| *w > 0.0);
    if samples.len() <= PROFILE_BINS {
        return samples;
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = samples.iter().map(|s| s.1).sum();
    let per_bin = total / PROFILE_BINS as f64;
    let mut out = Vec::with_capacity(PROFILE_BINS);
    let (mut acc_w, mut acc_v) = (0.0, 0.0);
    for (v, mut w) in samples {
        while acc_w + w >= per_bin * (1.0 - 1e-12) && out.len() + 1 < PROFILE_BINS {
            let take = per_bin - acc_w;
            acc_v += v * take;
            out.push((acc_v / per_bin, per_bin));
            w -= take;
            acc_w = 0.0;
            acc_v = 0.0;
        }
        acc_w += w;
        acc_v += v * w;
    }
    if acc_w > 0.0 {
        out.push((acc_v / acc_w, acc_w));
    }
    out
}

/// Largest gap of `{kθ mod 1}` for `0 ≤ k < n`, wrap-around included.
pub fn orbit_max_gap(theta: f64, n: u32) -> f64 {
    let mut pts: Vec<f64> = (0..n).map(|k| (k as f64 * theta).rem_euclid(1.0)).collect();
    pts.sort_by(f64::total_cmp);
    let mut gap = 1.0 - pts[pts.len() - 1] + pts[0];
    for w in pts.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    gap
}

enum Verdict {
    NonElliptic,
    BlockHyperbolic,
    Drift,
    Shape,
    Kept { m_prime: Mat2, start: HPoint, drift: f64 },
}

/// `(blocks, gap)` runs: gaps too short to move a point in double precision are
/// dropped and the blocks around them merged.
fn block_runs(spec: &PaddingSpec, e: f64) -> Vec<(usize, f64)> {
    let floor = 1e-17 / (1.0 + e.abs().sqrt());
    let mut runs: Vec<(usize, f64)> = Vec::new();
    for j in 0..2 * spec.n {
        let g = spec.gap(j);
        let g = if g > floor { g } else { 0.0 };
        match runs.last_mut() {
            Some((k, 0.0)) => {
                *k += 1;
                runs.last_mut().unwrap().1 = g;
            }
            _ => runs.push((1, g)),
        }
    }
    runs
}

/// Exact block-level bookkeeping of one padding step for one energy.
fn classify(track: &Track, spec: &PaddingSpec, kappa: f64, c_shape: f64) -> Result<Verdict> {
    let e = track.energy;
    let a_n = track.monodromy.pow(spec.big_n as u64);
    for k in 0..=BLOCK_GAP_PROBES {
        let g = spec.delta * k as f64 / BLOCK_GAP_PROBES as f64;
        if !(gap_propagator(e, g)? * a_n).is_elliptic() {
            return Ok(Verdict::BlockHyperbolic);
        }
    }
    let mut m = Mat2::IDENTITY;
    for (k, g) in block_runs(spec, e) {
        let blocks = if k == 1 { a_n } else { a_n.pow(k as u64) };
        m = if g > 0.0 { gap_propagator(e, g)? * blocks * m } else { blocks * m }.renormalized();
    }
    if !m.is_elliptic() {
        return Ok(Verdict::NonElliptic);
    }
    let start = fixed_point(&m)?;
    let drift = hyp_dist(start, track.centre);
    if drift >= kappa {
        return Ok(Verdict::Drift);
    }
    let shape = hyp_dist(start, HPoint { re: 0.0, im: e.sqrt() });
    if !(shape > 1.0 / c_shape && shape < c_shape) {
        return Ok(Verdict::Shape);
    }
    Ok(Verdict::Kept { m_prime: m, start, drift })
}

/// `(1/2π)∫ d` over the circle of radius `r` around a point at distance `rho` from `i`.
fn circle_average(rho: f64, r: f64) -> f64 {
    let (cr, sr) = (r.cosh(), r.sinh());
    let (cp, sp) = (rho.cosh(), rho.sinh());
    let mut acc = 0.0;
    for q in 0..CIRCLE_NODES {
        let phi = TAU * (q as f64 + 0.5) / CIRCLE_NODES as f64;
        acc += (cp * cr - sp * sr * phi.cos()).max(1.0).acosh();
    }
    acc / CIRCLE_NODES as f64
}

struct Advanced {
    track: Track,
    growth: f64,
}

/// Profile, sup and average of `d(u[V′](E, t), i)` with the block starts placed exactly
/// and each block's orbit spread over the circle it sweeps.
fn advance(track: &Track, spec: &PaddingSpec, period: f64, m_prime: Mat2, start: HPoint) -> Result<Advanced> {
    let e = track.energy;
    let a_n = track.monodromy.pow(spec.big_n as u64);
    let new_period = spec.padded_period(period);
    let block_w = spec.big_n as f64 * period / new_period;
    let mut samples: Profile = Vec::new();
    // blocks with a tiny displacement are merged per profile sample
    let mut quiet = vec![(0.0, 0.0); track.profile.len()];
    // second-order shift r²/(4 tanh ρ) summed over blocks: (Σ weight, Σ weight·r²)
    let mut flat = (0.0, 0.0);
    let mut wide: Profile = Vec::new();
    let min_rho = track.profile.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let mut sup = f64::NEG_INFINITY;
    let mut z = start;
    for (k, g) in block_runs(spec, e) {
        // the blocks of a run all start on one circle around the centre
        let run_w = k as f64 * block_w;
        let r = hyp_dist(z, track.centre);
        sup = sup.max(track.sup + r);
        if r < SMALL_RADIUS && min_rho > 10.0 * r {
            flat.0 += run_w;
            flat.1 += run_w * r * r;
        } else if r < SMALL_RADIUS {
            for (slot, &(rho, w)) in quiet.iter_mut().zip(&track.profile) {
                let shift = if rho > 10.0 * r { 0.25 * r * r / rho.tanh() } else { circle_average(rho, r) - rho };
                slot.0 += (rho + shift) * w * run_w;
                slot.1 += w * run_w;
            }
        } else {
            wide.push((r, run_w));
        }
        let end = moebius(&if k == 1 { a_n } else { a_n.pow(k as u64) }, z)?;
        if g > 1e-12 {
            for q in 1..=4 {
                let p = moebius(&gap_propagator(e, g * q as f64 / 4.0)?, end)?;
                let d = hyp_dist(p, i_point());
                sup = sup.max(d);
                samples.push((d, g / (4.0 * new_period)));
            }
        }
        z = if g > 0.0 { moebius(&gap_propagator(e, g)?, end)? } else { end };
    }
    // displaced blocks vary slowly in r, so their radii are binned before averaging
    for (r, run_w) in compress(wide) {
        for &(rho, w) in &track.profile {
            samples.push((circle_average(rho, r), w * run_w));
        }
    }
    if flat.0 > 0.0 {
        let mean_sq = flat.1 / flat.0;
        for (slot, &(rho, w)) in quiet.iter_mut().zip(&track.profile) {
            slot.0 += (rho + 0.25 * mean_sq / rho.tanh()) * w * flat.0;
            slot.1 += w * flat.0;
        }
    }
    samples.extend(quiet.into_iter().filter(|q| q.1 > 0.0).map(|(vw, w)| (vw / w, w)));
    let total: f64 = samples.iter().map(|s| s.1).sum();
    let avg = samples.iter().map(|(v, w)| v * w).sum::<f64>() / total;
    let profile = compress(samples.into_iter().map(|(v, w)| (v, w / total)).collect());
    let theta = rotation_angle(&m_prime)?.value();
    let sup = sup.max(track.sup);
    let next = Track {
        energy: e,
        alive: true,
        monodromy: m_prime,
        centre: start,
        theta,
        sup0: track.sup0,
        avg0: track.avg0,
        sup,
        avg,
        profile,
    };
    Ok(Advanced { growth: sup - track.sup, track: next })
}

fn choose_big_n(tracks: &[Track], cfg: &Lemma22Config) -> (u32, f64) {
    let alive: Vec<&Track> = tracks.iter().filter(|t| t.alive).collect();
    let mut big_n = cfg.big_n_start;
    loop {
        let dense = alive.par_iter().filter(|t| orbit_max_gap(t.theta, big_n) <= 0.02).count();
        let frac = dense as f64 / alive.len().max(1) as f64;
        if frac >= 0.99 || big_n >= cfg.big_n_cap {
            return (big_n, frac);
        }
        big_n = (big_n * 2).min(cfg.big_n_cap);
    }
}

fn count_exclusions(tracks: &[Track], spec: &PaddingSpec, cfg: &Lemma22Config, c_shape: f64) -> Result<(Exclusions, Vec<Option<Verdict>>)> {
    let verdicts: Vec<Result<Option<Verdict>>> = tracks
        .par_iter()
        .map(|t| if t.alive { classify(t, spec, cfg.kappa, c_shape).map(Some) } else { Ok(None) })
        .collect();
    let mut ex = Exclusions::default();
    let mut out = Vec::with_capacity(verdicts.len());
    for v in verdicts {
        let v = v?;
        match &v {
            Some(Verdict::NonElliptic) => ex.non_elliptic += 1,
            Some(Verdict::BlockHyperbolic) => ex.block_hyperbolic += 1,
            Some(Verdict::Drift) => ex.drift += 1,
            Some(Verdict::Shape) => ex.shape += 1,
            _ => {}
        }
        out.push(v);
    }
    Ok((ex, out))
}

/// Runs the padding pipeline from a prepared step-0 state.
pub fn run_lemma22_from(start: &Lemma22Start, v0: &ContinuumPotential, config: &Lemma22Config) -> Result<Lemma22Report> {
    config.validate()?;
    let mut tracks = start.tracks.clone();
    let count = tracks.len();
    let cell = start.measure / count as f64;
    let c_step0 = tracks.iter().filter(|t| t.alive).map(|t| t.avg0).fold(f64::NEG_INFINITY, f64::max);
    let mut period = v0.period();
    let mut steps = Vec::with_capacity(config.steps);
    for step in 1..=config.steps {
        let retained_before = tracks.iter().filter(|t| t.alive).count();
        if retained_before == 0 {
            return Err(Error::Collapse { step });
        }
        let (big_n, dense) = choose_big_n(&tracks, config);
        let mut n = config.n_start;
        let mut trials = Vec::new();
        let (mut ex, mut verdicts) = count_exclusions(&tracks, &PaddingSpec::new(config.delta, big_n, n)?, config, start.c_shape)?;
        trials.push((n, ex.total() as f64 / retained_before as f64));
        while n < config.n_cap {
            let next_n = (n * 2).min(config.n_cap);
            let (ex2, v2) = count_exclusions(&tracks, &PaddingSpec::new(config.delta, big_n, next_n)?, config, start.c_shape)?;
            // drift vanishes once n resolves the slow rotation; stop when it stops paying off
            let small = ex2.drift as f64 <= 0.005 * retained_before as f64;
            let stalled = ex.drift.saturating_sub(ex2.drift) <= 2 && 2 * ex2.drift < retained_before;
            let settled = small || stalled;
            n = next_n;
            ex = ex2;
            verdicts = v2;
            trials.push((n, ex.total() as f64 / retained_before as f64));
            if settled {
                break;
            }
        }
        let spec = PaddingSpec::new(config.delta, big_n, n)?;
        let excluded_fraction = ex.total() as f64 / retained_before as f64;
        let c_prime = config.c_prime.unwrap_or(excluded_fraction / (2.0 * config.delta.max(f64::MIN_POSITIVE)));

        let advanced: Vec<Result<Option<Advanced>>> = tracks
            .par_iter()
            .zip(verdicts.par_iter())
            .map(|(t, v)| match v {
                Some(Verdict::Kept { m_prime, start, .. }) => advance(t, &spec, period, *m_prime, *start).map(Some),
                _ => Ok(None),
            })
            .collect();
        let mut max_drift: f64 = 0.0;
        for v in verdicts.iter().flatten() {
            if let Verdict::Kept { drift, .. } = v {
                max_drift = max_drift.max(*drift);
            }
        }
        let mut growths = Vec::new();
        let mut max_avg_change: f64 = 0.0;
        for (t, adv) in tracks.iter_mut().zip(advanced) {
            if !t.alive {
                continue;
            }
            match adv? {
                Some(a) => {
                    max_avg_change = max_avg_change.max((a.track.avg - t.avg).abs());
                    growths.push(a.growth);
                    *t = a.track;
                }
                None => t.alive = false,
            }
        }
        let growth = config
            .gammas
            .iter()
            .map(|&gamma| {
                let threshold = if c_prime > 0.0 && config.delta > 0.0 { config.delta / (c_prime * gamma) } else { f64::INFINITY };
                let hits = growths.iter().filter(|g| **g > threshold).count();
                GrowthStat { gamma, threshold, fraction: hits as f64 / retained_before as f64 }
            })
            .collect();
        period = spec.padded_period(period);
        steps.push(StepRecord {
            step,
            big_n,
            n,
            orbit_dense_fraction: dense,
            n_trials: trials,
            retained_before,
            exclusions: ex,
            excluded_fraction,
            excluded_measure: ex.total() as f64 * cell,
            measure_band: 2.0 * start.measure / count as f64,
            c_prime,
            gamma_grid: config.gammas.clone(),
            growth,
            max_drift,
            max_avg_change,
        });
        if tracks.iter().all(|t| !t.alive) {
            return Err(Error::Collapse { step });
        }
    }
    let alive: Vec<&Track> = tracks.iter().filter(|t| t.alive).collect();
    let avg_bound = c_step0 + config.kappa * config.steps as f64;
    let averages: Vec<EnergyAverage> = alive
        .iter()
        .map(|t| EnergyAverage { energy: t.energy, avg0: t.avg0, avg: t.avg, sup0: t.sup0, sup: t.sup })
        .collect();
    Ok(Lemma22Report {
        config: config.clone(),
        delta: config.delta,
        xi: config.xi,
        c0: config.c0,
        m: config.m,
        p: config.steps,
        spectrum_measure: start.measure,
        c_shape: start.c_shape,
        step0_excluded_fraction: start.step0_excluded as f64 / count as f64,
        c_step0,
        avg_bound,
        steps,
        retained_fraction: alive.len() as f64 / count as f64,
        retained_measure: alive.len() as f64 * cell,
        sup_at_least_c0_fraction: alive.iter().filter(|t| t.sup >= config.c0).count() as f64 / count as f64,
        averages_bounded: averages.iter().all(|a| a.avg.is_finite() && a.avg <= avg_bound),
        averages,
    })
}

pub fn run_lemma22(v0: &ContinuumPotential, config: &Lemma22Config) -> Result<Lemma22Report> {
    let start = prepare_lemma22(v0, config)?;
    run_lemma22_from(&start, v0, config)
}

/// `max_δ excluded(δ)/(2δ)` over single padding steps.
pub fn fit_c_prime(start: &Lemma22Start, v0: &ContinuumPotential, deltas: &[f64]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for &delta in deltas {
        let cfg = Lemma22Config { delta, steps: 1, c_prime: None, ..start.config.clone() };
        let report = run_lemma22_from(start, v0, &cfg)?;
        best = best.max(report.steps[0].c_prime);
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// composite discrete pipeline

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Asd12Config {
    pub lambda0: f64,
    pub delta: f64,
    pub c0: f64,
    pub steps: usize,
    pub n2: usize,
    pub n3: usize,
    pub n4: usize,
    pub n5: usize,
    pub energy_grid: usize,
    pub t_samples: usize,
    pub closeness_eps: f64,
    pub cert_energies: usize,
    pub cert_t: usize,
    pub cert_sites: usize,
    pub cert_directions: usize,
}

impl Default for Asd12Config {
    fn default() -> Self {
        Asd12Config {
            lambda0: 0.1,
            delta: 0.05,
            c0: 1.0,
            steps: 1,
            n2: 2,
            n3: 16,
            n4: 2,
            n5: 4,
            energy_grid: 200,
            t_samples: 16,
            closeness_eps: 0.5,
            cert_energies: 24,
            cert_t: 8,
            cert_sites: 8,
            cert_directions: 90,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Asd12Step {
    pub step: usize,
    pub n0: f64,
    pub n1: usize,
    pub retained_before: usize,
    pub non_elliptic: usize,
    pub far_from_reference: usize,
    pub excluded_fraction: f64,
    pub max_closeness: f64,
    pub mean_inf_sup: f64,
    pub inf_sup_at_least_c0_fraction: f64,
    pub max_average: f64,
    /// `inf_t sup_j d` after the step minus `sup_t sup_j d` before it, per energy.
    pub mean_growth: f64,
    pub min_growth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub threshold: f64,
    pub samples: usize,
    pub bad_fraction: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Asd12Report {
    pub config: Asd12Config,
    pub energies: (f64, f64),
    pub c_step0: f64,
    /// Entry 0 describes the starting family.
    pub steps: Vec<Asd12Step>,
    pub retained_fraction: f64,
    pub certificate: Certificate,
}

struct SliceStats {
    elliptic: bool,
    closeness: f64,
    inf_sup: f64,
    sup_sup: f64,
    average: f64,
}

fn reference_point(lambda0: f64, e: f64, t: f64) -> Option<HPoint> {
    let m = Mat2::step(e - 2.0 * lambda0 * (TAU * t).cos());
    if m.is_elliptic() {
        fixed_point(&m).ok()
    } else {
        None
    }
}

fn slice_start(f: &DiscreteFamily, e: f64, t: f64) -> Option<HPoint> {
    let m = f.monodromy(e, t, 0);
    if m.is_elliptic() {
        fixed_point(&m).ok()
    } else {
        None
    }
}

/// Sites `u(E, j)` along one index period, starting from the fixed point at 0.
fn site_points(f: &DiscreteFamily, e: f64, t: f64, start: HPoint) -> Result<Vec<HPoint>> {
    let mut out = Vec::with_capacity(f.n1);
    let mut z = start;
    for j in 0..f.n1 as i64 {
        out.push(z);
        z = moebius(&Mat2::step(e - f.eval(t, j)), z)?;
    }
    Ok(out)
}

const CLOSENESS_POINTS: usize = 48;

fn slice_stats(f: &DiscreteFamily, cfg: &Asd12Config, e: f64) -> Result<SliceStats> {
    // sampled C¹ distance on [−1, 2]
    let h = 1e-4;
    let mut closeness: f64 = 0.0;
    for k in 0..=CLOSENESS_POINTS {
        let t = -1.0 + 3.0 * k as f64 / CLOSENESS_POINTS as f64;
        let pts: Option<Vec<(HPoint, HPoint)>> = [t - h, t, t + h]
            .iter()
            .map(|&s| Some((slice_start(f, e, s)?, reference_point(cfg.lambda0, e, s)?)))
            .collect();
        let Some(pts) = pts else {
            return Ok(SliceStats { elliptic: false, closeness: f64::INFINITY, inf_sup: 0.0, sup_sup: 0.0, average: 0.0 });
        };
        let diff = |p: (HPoint, HPoint)| (p.0.re - p.1.re, p.0.im - p.1.im);
        let (d0r, d0i) = diff(pts[1]);
        let (dp_r, dp_i) = diff(pts[2]);
        let (dm_r, dm_i) = diff(pts[0]);
        let c0 = d0r.hypot(d0i);
        let c1 = ((dp_r - dm_r) / (2.0 * h)).hypot((dp_i - dm_i) / (2.0 * h));
        closeness = closeness.max(c0).max(c1);
    }
    let mut inf_sup = f64::INFINITY;
    let mut sup_sup: f64 = 0.0;
    let mut total = 0.0;
    let mut count = 0usize;
    for k in 0..cfg.t_samples {
        let t = f.n0 * k as f64 / cfg.t_samples as f64;
        let Some(z) = slice_start(f, e, t) else {
            return Ok(SliceStats { elliptic: false, closeness, inf_sup: 0.0, sup_sup: 0.0, average: 0.0 });
        };
        let ds: Vec<f64> = site_points(f, e, t, z)?.iter().map(|u| hyp_dist(*u, i_point())).collect();
        let sup = ds.iter().cloned().fold(0.0, f64::max);
        inf_sup = inf_sup.min(sup);
        sup_sup = sup_sup.max(sup);
        total += ds.iter().sum::<f64>();
        count += ds.len();
    }
    Ok(SliceStats { elliptic: true, closeness, inf_sup, sup_sup, average: total / count as f64 })
}

/// `inf_w sup_{0<l≤N₁} ‖A(E, j, j+l) w‖` over a direction grid.
fn inf_sup_norm(f: &DiscreteFamily, e: f64, t: f64, j: i64, directions: usize) -> f64 {
    let mut best = f64::INFINITY;
    for k in 0..directions {
        let a = PI * k as f64 / directions as f64;
        let (mut x, mut y) = (a.cos(), a.sin());
        let mut sup: f64 = 0.0;
        for l in 0..f.n1 as i64 {
            let nx = (e - f.eval(t, j + l)) * x - y;
            y = x;
            x = nx;
            sup = sup.max(x.hypot(y));
        }
        best = best.min(sup);
    }
    best
}

pub fn run_asd12(f0: &DiscreteFamily, energies: (f64, f64), config: &Asd12Config) -> Result<Asd12Report> {
    f0.validate()?;
    let (lo, hi) = energies;
    if !(hi > lo) || config.energy_grid == 0 || config.t_samples == 0 {
        return Err(Error::validation("energies/grid", "need a non-empty interval and grid"));
    }
    let grid: Vec<f64> = (0..config.energy_grid).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / config.energy_grid as f64).collect();
    let mut alive = vec![true; grid.len()];
    let mut f = f0.clone();
    let mut steps = Vec::with_capacity(config.steps + 1);
    let mut prev_sup = vec![0.0; grid.len()];
    for step in 0..=config.steps {
        let retained_before = alive.iter().filter(|a| **a).count();
        if step > 0 {
            f = twist_family(&f, config.n3)?;
            f = repeat_family(&f, config.n2)?;
            f = slide_family(&f, config.delta, config.n4)?;
            f = twist_family(&f, config.n5)?;
        }
        let stats: Vec<Result<Option<SliceStats>>> = grid
            .par_iter()
            .zip(alive.par_iter())
            .map(|(&e, &a)| if a { slice_stats(&f, config, e).map(Some) } else { Ok(None) })
            .collect();
        let (mut non_elliptic, mut far) = (0, 0);
        let (mut max_close, mut sum_inf_sup, mut hits, mut max_avg, mut kept) = (0.0f64, 0.0, 0usize, 0.0f64, 0usize);
        let (mut sum_growth, mut min_growth) = (0.0, f64::INFINITY);
        for (k, s) in stats.into_iter().enumerate() {
            let Some(s) = s? else { continue };
            if !s.elliptic {
                non_elliptic += 1;
                alive[k] = false;
            } else if s.closeness >= config.closeness_eps {
                far += 1;
                alive[k] = false;
            } else {
                kept += 1;
                max_close = max_close.max(s.closeness);
                sum_inf_sup += s.inf_sup;
                if s.inf_sup >= config.c0 {
                    hits += 1;
                }
                max_avg = max_avg.max(s.average);
                if step > 0 {
                    let g = s.inf_sup - prev_sup[k];
                    sum_growth += g;
                    min_growth = min_growth.min(g);
                }
                prev_sup[k] = s.sup_sup;
            }
        }
        if kept == 0 {
            return Err(Error::Collapse { step });
        }
        steps.push(Asd12Step {
            step,
            n0: f.n0,
            n1: f.n1,
            retained_before,
            non_elliptic,
            far_from_reference: far,
            excluded_fraction: (non_elliptic + far) as f64 / retained_before as f64,
            max_closeness: max_close,
            mean_inf_sup: sum_inf_sup / kept as f64,
            inf_sup_at_least_c0_fraction: hits as f64 / kept as f64,
            max_average: max_avg,
            mean_growth: if step > 0 { sum_growth / kept as f64 } else { 0.0 },
            min_growth: if step > 0 { min_growth } else { 0.0 },
        });
    }
    let c_step0 = steps[0].max_average;

    let threshold = ((config.c0 - 2.0 * c_step0) / 4.0).exp() / 2.0;
    let survivors: Vec<f64> = grid.iter().zip(&alive).filter(|(_, a)| **a).map(|(e, _)| *e).collect();
    let stride = survivors.len().div_ceil(config.cert_energies.max(1)).max(1);
    let picks: Vec<f64> = survivors.iter().step_by(stride).cloned().collect();
    let pairs: Vec<(f64, f64, i64)> = picks
        .iter()
        .flat_map(|&e| {
            let f = &f;
            (0..config.cert_t).flat_map(move |a| {
                let t = f.n0 * a as f64 / config.cert_t as f64;
                let site_stride = (f.n1 / config.cert_sites.max(1)).max(1);
                (0..config.cert_sites.min(f.n1)).map(move |b| (e, t, (b * site_stride) as i64))
            })
        })
        .collect();
    let bad = pairs
        .par_iter()
        .filter(|(e, t, j)| inf_sup_norm(&f, *e, *t, *j, config.cert_directions) <= threshold)
        .count();
    let bad_fraction = if pairs.is_empty() { 0.0 } else { bad as f64 / pairs.len() as f64 };
    let bound = config.c0.powf(-0.5);
    Ok(Asd12Report {
        config: config.clone(),
        energies,
        c_step0,
        steps,
        retained_fraction: alive.iter().filter(|a| **a).count() as f64 / grid.len() as f64,
        certificate: Certificate { threshold, samples: pairs.len(), bad_fraction, bound, pass: bad_fraction < bound },
    })
}

/// `λ₀`-cosine family `𝒱(t, j) = 2λ₀ cos 2πt` with one site per period.
pub fn cosine_family(lambda0: f64) -> DiscreteFamily {
    DiscreteFamily { n0: 1.0, n1: 1, expr: crate::expr::Expr::T.cos().scaled(2.0 * lambda0) }
}

// ---------------------------------------------------------------------------
// random increments

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomModelSpec {
    pub delta: f64,
    pub r: f64,
    pub c_prime: f64,
    pub p: usize,
    pub trials: usize,
    pub seed: u64,
    pub c0: f64,
}

impl RandomModelSpec {
    /// Admissible `l` with `4δR/C′ < l < R/C′²`.
    pub fn l_range(&self) -> Result<(u64, u64)> {
        if !(self.delta > 0.0 && self.r > 0.0 && self.c_prime > 0.0) {
            return Err(Error::validation("delta/R/Cprime", "must be positive"));
        }
        let lo = (4.0 * self.delta * self.r / self.c_prime).floor() as u64 + 1;
        let upper = self.r / (self.c_prime * self.c_prime);
        let hi = upper.ceil() as u64 - 1;
        if lo > hi {
            return Err(Error::validation("R", format!("empty l-range ({lo} > {hi})")));
        }
        Ok((lo, hi))
    }

    fn scale(&self) -> f64 {
        self.delta * self.r / (3.0 * self.c_prime)
    }

    /// `p(W ≥ l/R)` for `l` in the admissible range, clipped to `[0, 1]`.
    pub fn tail(&self, l: u64) -> f64 {
        (self.scale() / l as f64).min(1.0)
    }

    fn draw(&self, rng: &mut ChaCha8Rng, range: (u64, u64)) -> f64 {
        let u: f64 = 1.0 - rng.gen::<f64>();
        let l = (self.scale() / u).floor();
        if l < range.0 as f64 {
            0.0
        } else {
            l.min(range.1 as f64) / self.r
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WjStats {
    pub spec: RandomModelSpec,
    pub mean_sum: f64,
    pub p_below_c0: f64,
    pub histogram: Vec<HistBin>,
}

impl WjStats {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lo,hi,count\n");
        for b in &self.histogram {
            s.push_str(&format!("{},{},{}\n", b.lo, b.hi, b.count));
        }
        s
    }
}

const TRIAL_CHUNK: usize = 1024;
const HIST_BINS: usize = 40;

/// Chunk `k` of trials draws from stream `k` of the seeded generator.
fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

pub fn wj_model(spec: &RandomModelSpec) -> Result<WjStats> {
    let range = spec.l_range()?;
    let chunks = spec.trials.div_ceil(TRIAL_CHUNK);
    let sums: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = chunk_rng(spec.seed, c);
            let len = TRIAL_CHUNK.min(spec.trials - c * TRIAL_CHUNK);
            (0..len).map(|_| (0..spec.p).map(|_| spec.draw(&mut rng, range)).sum::<f64>()).collect::<Vec<_>>()
        })
        .collect();
    let n = sums.len().max(1) as f64;
    let mean_sum = sums.iter().sum::<f64>() / n;
    let p_below_c0 = sums.iter().filter(|s| **s < spec.c0).count() as f64 / n;
    let top = sums.iter().cloned().fold(0.0, f64::max);
    let width = if top > 0.0 { top / HIST_BINS as f64 } else { 1.0 };
    let mut histogram: Vec<HistBin> =
        (0..HIST_BINS).map(|k| HistBin { lo: k as f64 * width, hi: (k + 1) as f64 * width, count: 0 }).collect();
    for s in &sums {
        let k = ((s / width) as usize).min(HIST_BINS - 1);
        histogram[k].count += 1;
    }
    Ok(WjStats { spec: spec.clone(), mean_sum, p_below_c0, histogram })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub l: u64,
    pub expected: f64,
    pub observed: f64,
    pub sigma: f64,
}

/// Empirical `p(W ≥ l/R)` from single draws against the tail law.
pub fn wj_tail_check(spec: &RandomModelSpec, draws: usize, ls: &[u64]) -> Result<Vec<TailCheck>> {
    let range = spec.l_range()?;
    let mut rng = chunk_rng(spec.seed, usize::MAX >> 1);
    let values: Vec<f64> = (0..draws).map(|_| spec.draw(&mut rng, range)).collect();
    Ok(ls
        .iter()
        .map(|&l| {
            let expected = spec.tail(l);
            let level = l as f64 / spec.r - 1e-12;
            let observed = values.iter().filter(|w| **w >= level).count() as f64 / draws as f64;
            TailCheck { l, expected, observed, sigma: (expected * (1.0 - expected) / draws as f64).sqrt() }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Carleson sandbox

/// `ln((‖A‖ + ‖A‖⁻¹)/2)` through the Frobenius norm of a unimodular matrix.
pub fn carleson_n(a: &Mat2) -> f64 {
    0.5 * ((a.frobenius_sq() - 2.0) / 4.0).ln_1p()
}

/// `A_n R_θ ⋯ A₁ R_θ`.
pub fn rotated_product(mats: &[Mat2], theta: f64) -> Mat2 {
    let r = rotation_raw(theta);
    mats.iter().fold(Mat2::IDENTITY, |acc, a| *a * r * acc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParsevalReport {
    pub n: usize,
    pub grid: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

pub fn carleson_parseval(mats: &[Mat2], grid: usize) -> Result<ParsevalReport> {
    if grid == 0 {
        return Err(Error::validation("grid", "must be positive"));
    }
    for (k, a) in mats.iter().enumerate() {
        if (a.det() - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("matrices[{k}]"), format!("determinant {} is not 1", a.det())));
        }
    }
    let lhs = (0..grid)
        .into_par_iter()
        .map(|k| carleson_n(&rotated_product(mats, k as f64 / grid as f64)))
        .collect::<Vec<f64>>()
        .iter()
        .sum::<f64>()
        / grid as f64;
    let rhs: f64 = mats.iter().map(carleson_n).sum();
    Ok(ParsevalReport { n: mats.len(), grid, lhs, rhs, gap: (lhs - rhs).abs() })
}

/// `D_{e^λ} R_β`.
pub fn polar_factor(lambda: f64, beta: f64) -> Mat2 {
    Mat2::diag(lambda.exp(), (-lambda).exp()) * rotation_raw(beta)
}

/// `n` seeded factors `D_{e^λ} R_β` with `λ` uniform in `[0, lambda_max]`.
pub fn random_polar(seed: u64, n: usize, lambda_max: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lambdas = Vec::with_capacity(n);
    let mut betas = Vec::with_capacity(n);
    for _ in 0..n {
        lambdas.push(rng.gen::<f64>() * lambda_max);
        betas.push(rng.gen::<f64>());
    }
    (lambdas, betas)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct B1Report {
    pub theta: f64,
    pub b0: Mat2,
    pub b1: Mat2,
    pub secant_error: f64,
}

/// One summand of the first-order term, without the leading rotation.
pub fn b1_term(lambda: f64, phase: f64) -> Mat2 {
    let (c, s) = ((2.0 * TAU * phase).cos(), (2.0 * TAU * phase).sin());
    Mat2 { a: c, b: -s, c: -s, d: -c }.scale(lambda)
}

pub fn carleson_b1(lambdas: &[f64], betas: &[f64], n: usize, theta: f64) -> Result<B1Report> {
    if lambdas.len() < n || betas.len() < n {
        return Err(Error::validation("lambdas/betas", format!("need at least {n} entries")));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::validation("lambdas", format!("must be non-negative, got {l}")));
    }
    let mut alpha = 0.0;
    let mut sum = Mat2 { a: 0.0, b: 0.0, c: 0.0, d: 0.0 };
    for j in 0..n {
        alpha += betas[j];
        sum = sum.add(&b1_term(lambdas[j], alpha + (j + 1) as f64 * theta));
    }
    let b0 = rotation_raw(n as f64 * theta + alpha);
    let b1 = b0 * sum;
    let s = 1e-3;
    let mats: Vec<Mat2> = (0..n).map(|j| polar_factor(s * lambdas[j], betas[j])).collect();
    let full = rotated_product(&mats, theta);
    let secant_error = full.sub(&b0).sub(&b1.scale(s)).norm() / (s * s);
    Ok(B1Report { theta, b0, b1, secant_error })
}

// ---------------------------------------------------------------------------
// crookedness, goodness, niceness

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrookedReport {
    pub eps1: f64,
    pub c1: f64,
    pub m: f64,
    pub grid: usize,
    pub basepoints: usize,
    pub spectrum_measure: f64,
    pub gamma_count: usize,
    pub deficit: f64,
    pub measure_band: f64,
    pub crooked: bool,
}

/// Per-energy growth values `exp((sup − d(u(E, t₀), i))/2)` at sampled basepoints.
pub fn growth_profile(v: &dyn Periodic, e: f64, basepoints: usize) -> Result<Vec<f64>> {
    let ts = v.basepoints(basepoints);
    let ds: Vec<f64> = center_curve_at(v, e, &ts)?.iter().map(|u| hyp_dist(*u, i_point())).collect();
    let sup = ds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ds.iter().map(|d| ((sup - d) / 2.0).exp()).collect())
}

pub fn crooked_metric(v: &dyn Periodic, eps1: f64, c1: f64, m: f64, grid: usize) -> Result<CrookedReport> {
    let basepoints = 1024;
    let (hull_lo, _) = spectral_hull(v);
    let bands = bands_between(v, hull_lo - 1.0, m)?;
    let energies = band_grid(&bands, grid);
    let inside: Vec<bool> = energies
        .par_iter()
        .map(|&e| match growth_profile(v, e, basepoints) {
            Ok(g) => {
                let above = g.iter().filter(|x| **x > c1).count();
                above as f64 > (1.0 - eps1) * g.len() as f64
            }
            Err(_) => false,
        })
        .collect();
    let gamma_count = inside.iter().filter(|b| **b).count();
    let measure = bands.measure();
    let deficit = if energies.is_empty() { measure } else { measure * (energies.len() - gamma_count) as f64 / energies.len() as f64 };
    Ok(CrookedReport {
        eps1,
        c1,
        m,
        grid,
        basepoints,
        spectrum_measure: measure,
        gamma_count,
        deficit,
        measure_band: 2.0 * measure / grid.max(1) as f64,
        crooked: deficit < eps1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodNiceReport {
    pub eps: f64,
    pub m: f64,
    pub good: bool,
    pub nice: bool,
    pub sup_l: f64,
    pub ids_deficit: f64,
}

const GOOD_GRID: usize = 400;
const DENSITY_NODES: usize = 96;

pub fn good_nice_metrics(v: &dyn Periodic, eps: f64, m: f64) -> Result<GoodNiceReport> {
    let (hull_lo, _) = spectral_hull(v);
    let all = band_spectrum(v, hull_lo - 1.0, m + 1.0, 1e-12)?;
    let below = all.below(m);
    let energies = band_grid(&below, GOOD_GRID);
    let lyap: Vec<Result<f64>> = energies.par_iter().map(|&e| lyapunov(v, e)).collect();
    let mut sup_l: f64 = 0.0;
    for l in lyap {
        sup_l = sup_l.max(l?);
    }
    let mut integral = 0.0;
    for (&(a, b), &(_, b_full)) in below.bands.iter().zip(&all.bands) {
        let rule = edge_rule(a, b, DENSITY_NODES, true, b >= b_full);
        let parts: Vec<Result<f64>> = rule.par_iter().map(|&(x, w)| ids_density(v, x, 256).map(|d| d * w)).collect();
        for p in parts {
            integral += p?;
        }
    }
    let ids_deficit = ids(v, m)? - integral;
    Ok(GoodNiceReport { eps, m, good: sup_l < eps, nice: ids_deficit.abs() < eps, sup_l, ids_deficit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    #[test]
    fn band_grid_covers_cells() {
        let bands = BandSet { bands: vec![(0.0, 1.0), (2.0, 4.0)], tol: 0.0 };
        let g = band_grid(&bands, 3);
        assert_eq!(g, vec![0.5, 2.5, 3.5]);
    }

    #[test]
    fn compress_keeps_mean() {
        let samples: Profile = (0..1000).map(|k| ((k as f64).sqrt(), 1e-3)).collect();
        let mean: f64 = samples.iter().map(|(v, w)| v * w).sum();
        let c = compress(samples);
        assert_eq!(c.len(), PROFILE_BINS);
        let cm: f64 = c.iter().map(|(v, w)| v * w).sum();
        assert!((mean - cm).abs() < 1e-10);
        assert!((c.iter().map(|s| s.1).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn circle_average_matches_expansion() {
        let (rho, r) = (1.3, 1e-3);
        let exact = circle_average(rho, r);
        assert!((exact - rho - 0.25 * r * r / rho.tanh()).abs() < 1e-9);
    }

    #[test]
    fn orbit_gap_of_golden_rotation() {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        assert!(orbit_max_gap(g, 200) < 0.02);
        assert!(orbit_max_gap(0.5, 200) >= 0.5);
    }

    #[test]
    fn parseval_single_diagonal() {
        let r = carleson_parseval(&[Mat2::diag(0.3f64.exp(), (-0.3f64).exp())], 64).unwrap();
        assert!(r.gap < 1e-10);
    }

    #[test]
    fn b1_vanishes_for_rotations() {
        let r = carleson_b1(&[0.0; 3], &[0.1, 0.2, 0.3], 3, 0.17).unwrap();
        let full = rotated_product(&[rotation_raw(0.1), rotation_raw(0.2), rotation_raw(0.3)], 0.17);
        assert!(full.sub(&r.b0).max_abs_entry() < 1e-14);
        assert!(r.b1.max_abs_entry() == 0.0);
    }

    #[test]
    fn wj_zero_steps() {
        let spec = RandomModelSpec { delta: 0.01, r: 1e4, c_prime: 1.0, p: 0, trials: 100, seed: 3, c0: 1.0 };
        let s = wj_model(&spec).unwrap();
        assert_eq!(s.mean_sum, 0.0);
        assert_eq!(s.p_below_c0, 1.0);
    }

    #[test]
    fn free_good_nice() {
        let v = ContinuumPotential::free(1.0).unwrap();
        let r = good_nice_metrics(&v, 1e-6, 30.0).unwrap();
        assert!(r.sup_l.abs() < 1e-10);
        assert!(r.ids_deficit.abs() < 1e-6, "{}", r.ids_deficit);
        assert!(r.good && r.nice);
    }

    #[test]
    fn lemma22_start_is_consistent() {
        let v = ContinuumPotential::single(1.0, 0.15, Expr::T.affine(1.0 / 0.7, -0.15 / 0.7).bump().scaled(6.0)).unwrap();
        let cfg = Lemma22Config { energy_grid: 100, samples: 64, ..Lemma22Config::default() };
        let start = prepare_lemma22(&v, &cfg).unwrap();
        assert!(start.retained() > 80);
        assert!(start.c_shape() > 1.0);
    }
}

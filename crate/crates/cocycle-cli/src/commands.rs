use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use cocycle_lab::cocycle::{
    band_norm_bound, band_spectrum, growth_functional, ids_density, ids_with_bands, lyapunov_from_monodromy,
    spectral_hull, spectral_parseval, uniformness_check,
};
use cocycle_lab::deform::{crumble, pad, pad_simple, repeat_family, slide_family, twist_family, PaddingSpec};
use cocycle_lab::descriptor::{load_descriptor, Descriptor};
use cocycle_lab::labverify::{
    carleson_b1, carleson_parseval, cosine_family, crooked_metric, fit_c_prime, good_nice_metrics, polar_factor,
    prepare_lemma22, random_polar, run_asd12, run_lemma22_from, wj_model, Asd12Config, Lemma22Config,
    RandomModelSpec,
};
use cocycle_lab::potential::{CirclePotential, Periodic};
use cocycle_lab::slowdeform::{decay_table, SmoothCocycleFamily};
use cocycle_lab::solenoid::{mixedness_check, potential_trace, realize_mixing, realize_padding, Tower, TowerStage};
use cocycle_lab::Error;

use crate::args::*;
use crate::output::{monodromy_table, write_csv, write_descriptor, write_report, RunConfig};
use crate::AppError;

type Res = Result<(), AppError>;

fn load(path: &Path) -> Result<Descriptor, AppError> {
    load_descriptor(path).map_err(AppError::Usage)
}

fn domain<T>(r: cocycle_lab::Result<T>) -> Result<T, AppError> {
    r.map_err(AppError::Domain)
}

fn usage<T>(r: cocycle_lab::Result<T>) -> Result<T, AppError> {
    r.map_err(AppError::Usage)
}

/// Energy window, defaulting to the spectral hull.
fn window(v: &dyn Periodic, emin: Option<f64>, emax: Option<f64>) -> Result<(f64, f64), AppError> {
    let (lo, hi) = spectral_hull(v);
    let emin = emin.unwrap_or(lo);
    let emax = match emax {
        Some(e) => e,
        None if hi.is_finite() => hi,
        None => return Err(AppError::Message("--emax is required for continuum potentials".into())),
    };
    if !(emax > emin) {
        return Err(AppError::Message(format!("empty energy window [{emin}, {emax}]")));
    }
    Ok((emin, emax))
}

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        p => (0..p).map(|k| lo + (hi - lo) * k as f64 / (p - 1) as f64).collect(),
    }
}

/// Fixed-point rendering at the resolution of `tol`, trailing zeros trimmed.
fn at_tolerance(x: f64, tol: f64) -> String {
    let digits = (-tol.log10()).ceil().clamp(0.0, 17.0) as usize;
    let s = format!("{x:.digits$}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

pub fn bands(a: &BandsArgs) -> Res {
    let d = load(&a.potential)?;
    let v = usage(d.as_periodic())?;
    let (emin, emax) = window(v, a.emin, a.emax)?;
    let set = domain(band_spectrum(v, emin, emax, a.tol))?;
    let run = RunConfig::new("bands", a).resolve("emin", emin).resolve("emax", emax);
    let rows: Vec<String> =
        set.bands.iter().map(|(lo, hi)| format!("{},{}", at_tolerance(*lo, a.tol), at_tolerance(*hi, a.tol))).collect();
    write_csv(a.out.as_deref(), &run, "E_lo,E_hi", &rows)
}

struct Prepared {
    desc: Descriptor,
    emin: f64,
    emax: f64,
    energies: Vec<f64>,
}

fn prepare(a: &GridArgs) -> Result<Prepared, AppError> {
    let desc = load(&a.potential)?;
    let (emin, emax) = window(usage(desc.as_periodic())?, a.emin, a.emax)?;
    let energies = grid(emin, emax, a.points);
    Ok(Prepared { desc, emin, emax, energies })
}

fn bands_below(v: &dyn Periodic, emax: f64) -> Result<cocycle_lab::cocycle::BandSet, AppError> {
    let (lo, _) = spectral_hull(v);
    domain(band_spectrum(v, lo - 1.0, emax + 1.0, 1e-12))
}

fn value_rows(energies: &[f64], values: &[f64]) -> Vec<String> {
    energies.iter().zip(values).map(|(e, x)| format!("{e},{x}")).collect()
}

pub fn ids(a: &GridArgs) -> Res {
    let p = prepare(a)?;
    let v = usage(p.desc.as_periodic())?;
    let set = bands_below(v, p.emax)?;
    let vals: Vec<f64> = domain(p.energies.par_iter().map(|&e| ids_with_bands(v, &set, e)).collect())?;
    let run = RunConfig::new("ids", a).resolve("emin", p.emin).resolve("emax", p.emax);
    write_csv(a.out.as_deref(), &run, "E,value", &value_rows(&p.energies, &vals))
}

pub fn lyapunov(a: &GridArgs) -> Res {
    let p = prepare(a)?;
    let period = usage(p.desc.as_periodic())?.period();
    let table = monodromy_table(&p.desc, &p.energies)?;
    let vals: Vec<f64> = table.iter().map(|m| lyapunov_from_monodromy(m, period)).collect();
    let run = RunConfig::new("lyapunov", a).resolve("emin", p.emin).resolve("emax", p.emax);
    write_csv(a.out.as_deref(), &run, "E,value", &value_rows(&p.energies, &vals))
}

pub fn sweep(a: &GridArgs) -> Res {
    let p = prepare(a)?;
    let v = usage(p.desc.as_periodic())?;
    let table = monodromy_table(&p.desc, &p.energies)?;
    let set = bands_below(v, p.emax)?;
    let ids: Vec<f64> = domain(p.energies.par_iter().map(|&e| ids_with_bands(v, &set, e)).collect())?;
    let rows: Vec<String> = p
        .energies
        .iter()
        .zip(&table)
        .zip(&ids)
        .map(|((e, m), n)| format!("{e},{},{},{n}", m.trace(), lyapunov_from_monodromy(m, v.period())))
        .collect();
    let run = RunConfig::new("sweep", a).resolve("emin", p.emin).resolve("emax", p.emax);
    write_csv(a.out.as_deref(), &run, "E,trace,lyapunov,ids", &rows)
}

/// Outside the spectrum the density is 0.
pub fn density(a: &DensityArgs) -> Res {
    let p = prepare(&a.grid)?;
    let v = usage(p.desc.as_periodic())?;
    let vals: Vec<f64> = domain(
        p.energies
            .par_iter()
            .map(|&e| match ids_density(v, e, a.quad) {
                Err(Error::NotElliptic { .. }) => Ok(0.0),
                r => r,
            })
            .collect(),
    )?;
    let run = RunConfig::new("density", a).resolve("emin", p.emin).resolve("emax", p.emax);
    write_csv(a.grid.out.as_deref(), &run, "E,value", &value_rows(&p.energies, &vals))
}

/// Rows only for grid energies where the monodromy is elliptic.
pub fn growth(a: &GrowthArgs) -> Res {
    let p = prepare(&a.grid)?;
    let v = usage(p.desc.as_periodic())?;
    let vals: Vec<Option<f64>> = domain(
        p.energies
            .par_iter()
            .map(|&e| match growth_functional(v, e, a.t0, a.samples) {
                Err(Error::NotElliptic { .. }) => Ok(None),
                r => r.map(Some),
            })
            .collect(),
    )?;
    let rows: Vec<String> =
        p.energies.iter().zip(&vals).filter_map(|(e, g)| g.map(|g| format!("{e},{g}"))).collect();
    let run = RunConfig::new("growth", a).resolve("emin", p.emin).resolve("emax", p.emax);
    write_csv(a.grid.out.as_deref(), &run, "E,value", &rows)
}

pub fn deform(cmd: &DeformCommand) -> Res {
    let family = |io: &Io| usage(load(&io.input)?.family().cloned());
    let (run, out, d) = match cmd {
        DeformCommand::Pad(a) => {
            let v = usage(load(&a.io.input)?.continuum().cloned())?;
            let spec = usage(PaddingSpec::new(a.delta, a.big_n, a.n))?;
            let d = Descriptor::ContinuumPeriodic(domain(pad(&v, &spec))?);
            (RunConfig::new("deform pad", a), &a.io.out, d)
        }
        DeformCommand::PadSimple(a) => {
            let v = usage(load(&a.io.input)?.continuum().cloned())?;
            let d = Descriptor::ContinuumPeriodic(domain(pad_simple(&v, a.delta, a.n))?);
            (RunConfig::new("deform pad-simple", a), &a.io.out, d)
        }
        DeformCommand::Repeat(a) => {
            let d = Descriptor::DiscreteFamily(domain(repeat_family(&family(&a.io)?, a.n))?);
            (RunConfig::new("deform repeat", a), &a.io.out, d)
        }
        DeformCommand::Twist(a) => {
            let d = Descriptor::DiscreteFamily(domain(twist_family(&family(&a.io)?, a.n))?);
            (RunConfig::new("deform twist", a), &a.io.out, d)
        }
        DeformCommand::Slide(a) => {
            let d = Descriptor::DiscreteFamily(domain(slide_family(&family(&a.io)?, a.delta, a.n))?);
            (RunConfig::new("deform slide", a), &a.io.out, d)
        }
        DeformCommand::Crumble(a) => {
            let circle = usage(CirclePotential::from_family(&family(&a.io)?))?;
            let d = Descriptor::DiscreteFamily(domain(crumble(&circle, a.n))?.to_family());
            (RunConfig::new("deform crumble", a), &a.io.out, d)
        }
    };
    write_descriptor(out.as_deref(), &run, &d)
}

/// Top stage of a tower descriptor, or the base stage of a bare continuum potential.
fn stage_of(d: &Descriptor, speed: f64) -> Result<TowerStage, AppError> {
    match d {
        Descriptor::Tower(t) => usage(t.build()),
        Descriptor::ContinuumPeriodic(v) => usage(TowerStage::base(v.clone(), speed)),
        other => Err(AppError::Message(format!("expected a tower or continuum-periodic descriptor, got {}", other.kind()))),
    }
}

pub fn tower(cmd: &TowerCommand) -> Res {
    match cmd {
        TowerCommand::RealizePad(a) => {
            let stage = stage_of(&load(&a.io.input)?, a.speed)?;
            let spec = usage(PaddingSpec::new(a.delta, a.big_n, a.n))?;
            let child = domain(realize_padding(&stage, &spec, a.eps0))?;
            let run = RunConfig::new("tower realize-pad", a);
            write_descriptor(a.io.out.as_deref(), &run, &Descriptor::Tower(Tower::from_stage(&child)))
        }
        TowerCommand::RealizeMix(a) => {
            let stage = stage_of(&load(&a.io.input)?, a.speed)?;
            let real = domain(realize_mixing(&stage, a.delta, a.n, a.eps0, a.big_n))?;
            let run = RunConfig::new("tower realize-mix", a);
            write_descriptor(a.io.out.as_deref(), &run, &Descriptor::Tower(Tower::from_stage(&real.stage)))
        }
        TowerCommand::Trace(a) => {
            let stage = stage_of(&load(&a.io.input)?, 1.0)?;
            let t_max = a.t_max.unwrap_or(stage.period);
            let rows: Vec<String> =
                potential_trace(&stage, t_max, a.samples).iter().map(|(t, v)| format!("{t},{v}")).collect();
            let run = RunConfig::new("tower trace", a).resolve("t_max", t_max);
            write_csv(a.io.out.as_deref(), &run, "t,V", &rows)
        }
        TowerCommand::Mixedness(a) => {
            let stage = stage_of(&load(&a.io.input)?, 1.0)?;
            let parent =
                stage.parent.as_deref().ok_or_else(|| AppError::Message("tower has no stage above its base".into()))?;
            let report = domain(mixedness_check(&stage, parent, a.big_n))?;
            write_report(a.io.out.as_deref(), &RunConfig::new("tower mixedness", a), report)
        }
    }
}

#[derive(Serialize)]
struct SpectralRow {
    n: i64,
    spectral_parseval: f64,
    band_norm_bound: f64,
}

#[derive(Serialize)]
struct ParsevalSummary {
    instances: Vec<cocycle_lab::labverify::ParsevalReport>,
    max_gap: f64,
}

pub fn verify(cmd: &VerifyCommand) -> Res {
    match cmd {
        VerifyCommand::Lemma22(a) => {
            let v = usage(load(&a.potential)?.continuum().cloned())?;
            let mut cfg = Lemma22Config {
                m: a.m,
                xi: a.xi,
                c0: a.c0,
                delta: a.delta,
                kappa: a.kappa,
                steps: a.steps,
                energy_grid: a.grid,
                samples: a.samples,
                c_prime: a.c_prime,
                ..Lemma22Config::default()
            };
            usage(cfg.validate())?;
            let start = domain(prepare_lemma22(&v, &cfg))?;
            if a.fit_c_prime {
                cfg.c_prime = Some(domain(fit_c_prime(&start, &v, &[0.0125, 0.025]))?);
            }
            let report = domain(run_lemma22_from(&start, &v, &cfg))?;
            write_report(a.out.as_deref(), &RunConfig::new("verify lemma22", a), report)
        }
        VerifyCommand::Asd12(a) => {
            let family = match &a.family {
                Some(p) => usage(load(p)?.family().cloned())?,
                None => cosine_family(a.lambda0),
            };
            let emin = a.emin.unwrap_or(-2.0 + 4.0 * a.lambda0);
            let emax = a.emax.unwrap_or(2.0 - 4.0 * a.lambda0);
            let cfg = Asd12Config {
                lambda0: a.lambda0,
                delta: a.delta,
                steps: a.steps,
                energy_grid: a.grid,
                ..Asd12Config::default()
            };
            let report = domain(run_asd12(&family, (emin, emax), &cfg))?;
            let run = RunConfig::new("verify asd12", a).resolve("emin", emin).resolve("emax", emax);
            write_report(a.out.as_deref(), &run, report)
        }
        VerifyCommand::Parseval(a) => {
            let instances: Vec<_> = (0..a.instances as u64)
                .map(|k| {
                    let (ls, bs) = random_polar(a.seed.wrapping_add(k), a.n, a.lambda_max);
                    let mats: Vec<_> = ls.iter().zip(&bs).map(|(l, b)| polar_factor(*l, *b)).collect();
                    carleson_parseval(&mats, a.grid)
                })
                .collect::<cocycle_lab::Result<_>>()
                .map_err(AppError::Usage)?;
            let max_gap = instances.iter().map(|r| r.gap).fold(0.0, f64::max);
            write_report(a.out.as_deref(), &RunConfig::new("verify parseval", a), ParsevalSummary { instances, max_gap })
        }
        VerifyCommand::B1(a) => {
            let (ls, bs) = random_polar(a.seed, a.n, a.lambda_max);
            let report = usage(carleson_b1(&ls, &bs, a.n, a.theta))?;
            write_report(a.out.as_deref(), &RunConfig::new("verify b1", a), report)
        }
        VerifyCommand::SpectralParseval(a) => {
            let d = load(&a.potential)?;
            let v = usage(d.discrete())?;
            let (lo, hi) = spectral_hull(v);
            let set = domain(band_spectrum(v, lo - 1.0, hi + 1.0, 1e-13))?;
            let rows: Vec<SpectralRow> = a
                .n
                .iter()
                .map(|&n| {
                    Ok(SpectralRow {
                        n,
                        spectral_parseval: spectral_parseval(v, n, a.quad)?,
                        band_norm_bound: band_norm_bound(v, 0.0, n as f64, &set, a.quad)?,
                    })
                })
                .collect::<cocycle_lab::Result<_>>()
                .map_err(AppError::Domain)?;
            write_report(a.out.as_deref(), &RunConfig::new("verify spectral-parseval", a), rows)
        }
        VerifyCommand::Slowdecay(a) => {
            let f = match a.family {
                SmoothFamily::Continuum => SmoothCocycleFamily::bundled_continuum(),
                SmoothFamily::Discrete => SmoothCocycleFamily::bundled_discrete(),
            };
            let (lo, hi) = f.energies;
            let energies: Vec<f64> =
                (0..a.energies).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / a.energies as f64).collect();
            let table = domain(decay_table(&f, &a.m, &a.n, &energies))?;
            let rows: Vec<String> = table
                .iter()
                .map(|r| format!("{},{},{},{},{}", r.m, r.n, r.residual, r.b_drift, r.theta_drift))
                .collect();
            write_csv(a.out.as_deref(), &RunConfig::new("verify slowdecay", a), "m,n,residual,B_drift,theta_drift", &rows)
        }
        VerifyCommand::Uniform(a) => {
            let d = load(&a.potential)?;
            let report = domain(uniformness_check(usage(d.as_periodic())?, a.eps, a.c, a.m, a.shifts, a.quad))?;
            write_report(a.out.as_deref(), &RunConfig::new("verify uniform", a), report)
        }
        VerifyCommand::Crooked(a) => {
            let d = load(&a.potential)?;
            let report = domain(crooked_metric(usage(d.as_periodic())?, a.eps1, a.c1, a.m, a.grid))?;
            write_report(a.out.as_deref(), &RunConfig::new("verify crooked", a), report)
        }
        VerifyCommand::GoodNice(a) => {
            let d = load(&a.potential)?;
            let report = domain(good_nice_metrics(usage(d.as_periodic())?, a.eps, a.m))?;
            write_report(a.out.as_deref(), &RunConfig::new("verify good-nice", a), report)
        }
        VerifyCommand::WjModel(a) => {
            if !(a.delta > 0.0) {
                return Err(AppError::Message("--delta must be positive".into()));
            }
            let p = a.p.unwrap_or((a.xi / a.delta).floor() as usize);
            let spec = RandomModelSpec {
                delta: a.delta,
                r: a.r,
                c_prime: a.c_prime,
                p,
                trials: a.trials,
                seed: a.seed,
                c0: a.c0,
            };
            let stats = usage(wj_model(&spec))?;
            write_report(a.out.as_deref(), &RunConfig::new("verify wj-model", a).resolve("p", p), stats)
        }
    }
}

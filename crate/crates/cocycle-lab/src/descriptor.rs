//! Canonical JSON descriptors for potentials, families and towers.
//!
//! A descriptor is tagged by `kind`. Saving is canonical (pretty-printed, keys in
//! declaration order, shortest round-trip floats), so `save(load(s)) == s` for any
//! file written by [`Descriptor::to_canonical_json`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::potential::{ContinuumPotential, DiscreteFamily, DiscretePeriodic, Periodic};
use crate::solenoid::Tower;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Descriptor {
    ContinuumPeriodic(ContinuumPotential),
    DiscretePeriodic(DiscretePeriodic),
    DiscreteFamily(DiscreteFamily),
    Tower(Tower),
}

impl Descriptor {
    pub fn kind(&self) -> &'static str {
        match self {
            Descriptor::ContinuumPeriodic(_) => "continuum-periodic",
            Descriptor::DiscretePeriodic(_) => "discrete-periodic",
            Descriptor::DiscreteFamily(_) => "discrete-family",
            Descriptor::Tower(_) => "tower",
        }
    }

    /// Checks the invariants that serde alone does not enforce.
    pub fn validate(&self) -> Result<()> {
        match self {
            // validated by its TryFrom on the way in
            Descriptor::ContinuumPeriodic(_) => Ok(()),
            Descriptor::DiscretePeriodic(v) => DiscretePeriodic::new(v.values.clone()).map(|_| ()),
            Descriptor::DiscreteFamily(f) => f.validate(),
            Descriptor::Tower(t) => t.build().map(|_| ()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: Descriptor = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            // serde wraps our own validation messages; keep the field name in front
            match msg.strip_prefix("invalid ") {
                Some(rest) => match rest.split_once(": ") {
                    Some((field, reason)) if !field.contains(' ') => Error::validation(field, reason),
                    _ => Error::validation("descriptor", msg.clone()),
                },
                None => Error::validation("descriptor", msg),
            }
        })?;
        d.validate()?;
        Ok(d)
    }

    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("descriptors always serialize");
        s.push('\n');
        s
    }

    /// The descriptor as a periodic operator, when it is one.
    pub fn as_periodic(&self) -> Result<&dyn Periodic> {
        match self {
            Descriptor::ContinuumPeriodic(v) => Ok(v),
            Descriptor::DiscretePeriodic(v) => Ok(v),
            other => Err(Error::validation(
                "kind",
                format!("expected a periodic potential, got {}", other.kind()),
            )),
        }
    }

    pub fn continuum(&self) -> Result<&ContinuumPotential> {
        match self {
            Descriptor::ContinuumPeriodic(v) => Ok(v),
            other => Err(Error::validation("kind", format!("expected continuum-periodic, got {}", other.kind()))),
        }
    }

    pub fn discrete(&self) -> Result<&DiscretePeriodic> {
        match self {
            Descriptor::DiscretePeriodic(v) => Ok(v),
            other => Err(Error::validation("kind", format!("expected discrete-periodic, got {}", other.kind()))),
        }
    }

    pub fn family(&self) -> Result<&DiscreteFamily> {
        match self {
            Descriptor::DiscreteFamily(f) => Ok(f),
            other => Err(Error::validation("kind", format!("expected discrete-family, got {}", other.kind()))),
        }
    }

    pub fn tower(&self) -> Result<&Tower> {
        match self {
            Descriptor::Tower(t) => Ok(t),
            other => Err(Error::validation("kind", format!("expected tower, got {}", other.kind()))),
        }
    }
}

pub fn load_descriptor(path: &Path) -> Result<Descriptor> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::validation("path", format!("{}: {e}", path.display())))?;
    Descriptor::from_json(&text)
}

/// The smooth bump potential used throughout the examples: period 1, zero on
/// `[0, 0.15]` and `[0.85, 1]`, height 6.
pub fn bump_potential() -> ContinuumPotential {
    ContinuumPotential::single(1.0, 0.15, Expr::T.affine(1.0 / 0.7, -0.15 / 0.7).bump().scaled(6.0))
        .expect("bump potential is valid")
}

/// Bundled example descriptors by file stem.
pub fn bundled() -> Vec<(&'static str, Descriptor)> {
    let discrete = |vs: &[f64]| Descriptor::DiscretePeriodic(DiscretePeriodic::new(vs.to_vec()).expect("finite"));
    let cosine = DiscreteFamily::new(1.0, 1, Expr::T.cos().scaled(0.2)).expect("valid family");
    let padded = {
        let base = crate::solenoid::TowerStage::base(bump_potential(), 1.0).expect("valid base");
        let spec = crate::deform::PaddingSpec::new(0.05, 2, 2).expect("valid spec");
        let stage = crate::solenoid::realize_padding(&base, &spec, 0.1).expect("padding realizes");
        Tower::from_stage(&stage)
    };
    vec![
        ("v0", Descriptor::ContinuumPeriodic(bump_potential())),
        ("free-continuum", Descriptor::ContinuumPeriodic(ContinuumPotential::free(1.0).expect("valid"))),
        ("free", discrete(&[0.0])),
        ("periodic2", discrete(&[0.0, 1.0])),
        ("periodic3", discrete(&[0.3, -0.5, 1.2])),
        ("periodic5", discrete(&[0.5, -0.2, 0.8, 0.0, -0.6])),
        ("cosine-family", Descriptor::DiscreteFamily(cosine)),
        ("tower-pad", Descriptor::Tower(padded)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_descriptor_round_trips() {
        for (name, d) in bundled() {
            let s = d.to_canonical_json();
            let back = Descriptor::from_json(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(back, d, "{name}");
            assert_eq!(back.to_canonical_json(), s, "{name}");
        }
    }

    #[test]
    fn kind_tag_leads() {
        let s = Descriptor::DiscretePeriodic(DiscretePeriodic::free()).to_canonical_json();
        assert!(s.starts_with("{\n  \"kind\": \"discrete-periodic\""), "{s}");
    }
}

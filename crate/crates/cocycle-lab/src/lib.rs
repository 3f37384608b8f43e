//! Numerical laboratory for periodic Schrödinger cocycles and the deformations
//! used to build potentials with exotic spectral behaviour.

pub mod cocycle;
pub mod deform;
pub mod descriptor;
pub mod error;
pub mod expr;
pub mod integrator;
pub mod labverify;
pub mod potential;
pub mod quad;
pub mod sl2geom;
pub mod slowdeform;
pub mod solenoid;

pub use error::{Error, Result};

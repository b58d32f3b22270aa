//! Numerical lab for the magnetically penalized pressureless Burgers system
//! `u_t + (u·∇)u + (b/ε) u⊥ = 0` in the plane.
//!
//! The solution is built along characteristics; the crate integrates them,
//! evaluates the small-ε drift asymptotics, inverts the flow map to get
//! Eulerian fields, and measures convergence orders across ε sweeps.

pub mod asymptotics;
pub mod characteristics;
pub mod config;
pub mod error;
pub mod fields;
pub mod geom;
pub mod harness;
pub mod inversion;
pub mod oscillatory;
pub mod report;
pub mod rk;

pub use error::{Error, Result};
pub use fields::{FieldSpec, InitialDensity, InitialVelocity, MagneticField};
pub use geom::{Mat2, Vec2};

//! Inversion of the flow map `x ↦ X(t, x)` to obtain Eulerian fields.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::{integrate_to, jacobian_det, DensityConvention, IntegratorConfig, ParticleState};
use crate::error::{Error, Result};
use crate::fields::{DomainSample, FieldSpec};
use crate::geom::Vec2;

pub const MAX_NEWTON_ITERS: usize = 50;
const MAX_HALVINGS: usize = 30;

/// Preimage `y` with `X(t, y) = target`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preimage {
    pub y: Vec2,
    pub iterations: usize,
    pub residual: f64,
    /// Characteristic state at `(t, y)`.
    pub state: ParticleState,
}

/// Newton's method on `X(t, y) - target = 0` using the integrated `DX`,
/// starting from `y = target` (the flow moves points by O(ε)). Steps are
/// halved while they fail to reduce the residual.
pub fn invert_x(
    spec: &FieldSpec,
    target: Vec2,
    t: f64,
    epsilon: f64,
    cfg: &IntegratorConfig,
    tol: f64,
) -> Result<Preimage> {
    let fail = |reason: String| Error::Inversion { target, reason };
    let eval = |y: Vec2| -> Result<(ParticleState, f64)> {
        let s = integrate_to(y, spec, epsilon, t, cfg)?;
        Ok((s, (s.x - target).norm()))
    };
    let mut y = target;
    let (mut state, mut res) = eval(y)?;
    for k in 0..MAX_NEWTON_ITERS {
        if res <= tol {
            return Ok(Preimage { y, iterations: k, residual: res, state });
        }
        let inv = state
            .dx
            .inverse()
            .ok_or_else(|| fail(format!("singular Jacobian at y = ({}, {})", y.x, y.y)))?;
        let step = inv.mul_vec(target - state.x);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand = y + step * lambda;
            match eval(cand) {
                Ok((s, r)) if r < res => {
                    y = cand;
                    state = s;
                    res = r;
                    accepted = true;
                    break;
                }
                _ => lambda *= 0.5,
            }
        }
        if !accepted {
            return Err(fail(format!("line search stalled at residual {res:e}")));
        }
    }
    if res <= tol {
        return Ok(Preimage { y, iterations: MAX_NEWTON_ITERS, residual: res, state });
    }
    Err(fail(format!("no convergence after {MAX_NEWTON_ITERS} iterations, residual {res:e}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerianPoint {
    pub x: Vec2,
    pub u: Vec2,
    pub rho: f64,
    pub preimage: Vec2,
    pub newton_iters: usize,
    pub residual: f64,
    pub jacobian: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionFailure {
    pub x: Vec2,
    pub reason: String,
}

/// Eulerian `u(t, ·)` and `ρ(t, ·)` on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerianFrame {
    pub t: f64,
    pub epsilon: f64,
    pub points: Vec<EulerianPoint>,
    pub failures: Vec<InversionFailure>,
    /// Set when at least one grid point could not be inverted.
    pub partial: bool,
}

impl EulerianFrame {
    /// CSV with columns `x1, x2, u1, u2, rho, preimage1, preimage2, newton_iters`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x1,x2,u1,u2,rho,preimage1,preimage2,newton_iters")?;
        for p in &self.points {
            writeln!(
                w,
                "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{}",
                p.x.x, p.x.y, p.u.x, p.u.y, p.rho, p.preimage.x, p.preimage.y, p.newton_iters
            )?;
        }
        Ok(())
    }
}

/// Eulerian value at a single point.
pub fn eulerian_point(
    spec: &FieldSpec,
    x: Vec2,
    t: f64,
    epsilon: f64,
    cfg: &IntegratorConfig,
    convention: DensityConvention,
    tol: f64,
) -> Result<EulerianPoint> {
    let pre = invert_x(spec, x, t, epsilon, cfg, tol)?;
    let j = jacobian_det(&pre.state);
    if j <= 0.0 {
        return Err(Error::CausticCrossed { t, det: j });
    }
    Ok(EulerianPoint {
        x,
        u: pre.state.u,
        rho: convention.apply(spec.rho0.eval(pre.y).0, j),
        preimage: pre.y,
        newton_iters: pre.iterations,
        residual: pre.residual,
        jacobian: j,
    })
}

/// Inverts the flow at every grid node in parallel. Points that fail are
/// recorded rather than aborting the frame.
pub fn eulerian_fields(
    spec: &FieldSpec,
    grid: &DomainSample,
    t: f64,
    epsilon: f64,
    cfg: &IntegratorConfig,
    convention: DensityConvention,
    tol: f64,
) -> Result<EulerianFrame> {
    grid.validate()?;
    let results: Vec<(Vec2, Result<EulerianPoint>)> = grid
        .points()
        .into_par_iter()
        .map(|x| (x, eulerian_point(spec, x, t, epsilon, cfg, convention, tol)))
        .collect();
    let mut frame = EulerianFrame { t, epsilon, points: Vec::new(), failures: Vec::new(), partial: false };
    for (x, r) in results {
        match r {
            Ok(p) => frame.points.push(p),
            Err(e) => frame.failures.push(InversionFailure { x, reason: e.to_string() }),
        }
    }
    frame.partial = !frame.failures.is_empty();
    Ok(frame)
}

//! Closed-form small-ε predictions for the characteristics, their Jacobian,
//! and the Lagrangian and Eulerian velocity and density.

use serde::{Deserialize, Serialize};

use crate::characteristics::DensityConvention;
use crate::error::{Error, Result};
use crate::fields::{drift_velocity, FieldSpec};
use crate::geom::{Mat2, Vec2};

/// Default tolerance of the Eulerian phase solve.
pub const THETA_TOL: f64 = 1e-12;
/// Contraction factor above which the phase solve switches to Newton.
pub const NEWTON_SWITCH: f64 = 0.9;
const THETA_MAX_ITER: usize = 1000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Along the characteristic, at `X(t, x)`.
    #[default]
    Lagrangian,
    /// At the fixed point `x`.
    Eulerian,
}

/// Which trig function multiplies which term of the first-order density
/// correction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityVariant {
    /// `1 + t (u0·∇log b) cos ψ - t (u0⊥·∇log b) sin ψ`
    #[default]
    CosSin,
    /// `1 + t (u0·∇log b) sin ψ - t (u0⊥·∇log b) cos ψ`
    SinCos,
}

impl DensityVariant {
    pub const ALL: [DensityVariant; 2] = [DensityVariant::CosSin, DensityVariant::SinCos];

    pub fn name(self) -> &'static str {
        match self {
            DensityVariant::CosSin => "cos_sin",
            DensityVariant::SinCos => "sin_cos",
        }
    }
}

/// Sign of the `cos θ` term in the implicit Eulerian phase equation
/// `θ = b t/ε - t (u0·∇log b) sin θ ∓ t (u0⊥·∇log b) cos θ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseConvention {
    /// `- t (u0⊥·∇log b) cos θ`, obtained by inverting the trajectory
    /// expansion; agrees with the characteristics to O(ε).
    #[default]
    Consistent,
    /// `+ t (u0⊥·∇log b) cos θ`; kept for comparison, it misses the
    /// characteristics by O(1) in the velocity phase.
    PlusCos,
}

impl PhaseConvention {
    fn cos_sign(self) -> f64 {
        match self {
            PhaseConvention::Consistent => -1.0,
            PhaseConvention::PlusCos => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conventions {
    pub density: DensityConvention,
    pub phase: PhaseConvention,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemainderOrder {
    Epsilon,
    EpsilonSquared,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseUsed {
    Numeric,
    Tilde,
    Theta,
}

/// Bundle of predictions at one `(x, t, ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticPrediction {
    pub x_pred: Vec2,
    pub dx_pred: Mat2,
    pub j_pred: f64,
    pub u_pred: Vec2,
    pub rho_pred: f64,
    /// Remainder order of the weakest member (`x_pred` alone is O(ε²)).
    pub order: RemainderOrder,
    pub phase_used: PhaseUsed,
}

/// Explicit Lagrangian phase `φ̃ = b t/ε - t (u0⊥·∇) log b`.
pub fn phase_tilde(spec: &FieldSpec, x: Vec2, t: f64, epsilon: f64) -> f64 {
    let f = spec.eval(x);
    f.b * t / epsilon - t * f.u0.perp().dot(f.grad_log_b())
}

/// Gyration plus drift: `x + ε (u0/b) sin(φ/ε) - ε (u0⊥/b)(1 - cos(φ/ε)) - ε t v`.
pub fn approx_x(spec: &FieldSpec, x: Vec2, t: f64, epsilon: f64, phi: f64) -> Vec2 {
    let f = spec.eval(x);
    let (s, c) = (phi / epsilon).sin_cos();
    let v = drift_velocity(spec, x);
    x + f.u0 * (epsilon / f.b * s) - f.u0.perp() * (epsilon / f.b * (1.0 - c)) - v * (epsilon * t)
}

/// `DX ≈ Id + t (u0 ⊗ ∇log b) cos(φ/ε) - t (u0⊥ ⊗ ∇log b) sin(φ/ε)` and the
/// matching Jacobian `1 + t (u0·∇log b) cos - t (u0⊥·∇log b) sin`.
pub fn approx_dx_j(spec: &FieldSpec, x: Vec2, t: f64, epsilon: f64, phi: f64) -> (Mat2, f64) {
    let f = spec.eval(x);
    let g = f.grad_log_b();
    let (s, c) = (phi / epsilon).sin_cos();
    let w = (f.u0 * c - f.u0.perp() * s) * t;
    (Mat2::IDENTITY + w.outer(g), 1.0 + w.dot(g))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSolution {
    pub theta: f64,
    pub iterations: usize,
    /// `|θ - RHS(θ)|`, evaluated on the O(1) correction `θ - b t/ε`.
    pub residual: f64,
    /// `L = t (|u0·∇log b| + |u0⊥·∇log b|)`.
    pub contraction_factor: f64,
    pub newton: bool,
}

/// Solves the implicit Eulerian phase equation at `(x, t)`.
///
/// Works on the correction `δ = θ - b t/ε` so that the residual is not
/// swamped by the O(1/ε) leading term. Plain fixed-point iteration from
/// `δ = 0` while `L < 0.9`; otherwise bracketed Newton on `δ - G(δ)`.
pub fn solve_theta(
    spec: &FieldSpec,
    x: Vec2,
    t: f64,
    epsilon: f64,
    tol: f64,
    convention: PhaseConvention,
) -> Result<PhaseSolution> {
    solve_theta_capped(spec, x, t, epsilon, tol, convention, THETA_MAX_ITER)
}

fn solve_theta_capped(
    spec: &FieldSpec,
    x: Vec2,
    t: f64,
    epsilon: f64,
    tol: f64,
    convention: PhaseConvention,
    max_iter: usize,
) -> Result<PhaseSolution> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("phase tolerance must be positive, got {tol}")));
    }
    let f = spec.eval(x);
    let g = f.grad_log_b();
    let a = t * f.u0.dot(g);
    let c = t * f.u0.perp().dot(g) * convention.cos_sign();
    let theta0 = f.b * t / epsilon;
    let lip = a.abs() + c.abs();
    let rhs = |d: f64| {
        let (s, co) = (theta0 + d).sin_cos();
        -a * s + c * co
    };
    let solution = |d: f64, residual: f64, iterations: usize, newton: bool| PhaseSolution {
        theta: theta0 + d,
        iterations,
        residual,
        contraction_factor: lip,
        newton,
    };

    if lip < NEWTON_SWITCH {
        let mut d = 0.0;
        for k in 1..=max_iter {
            let next = rhs(d);
            let r = (d - next).abs();
            if r <= tol {
                return Ok(solution(d, r, k, false));
            }
            d = next;
        }
        let r = (d - rhs(d)).abs();
        return Err(Error::PhaseSolve { contraction: lip, residual: r });
    }

    // h(δ) = δ - G(δ) is negative at -L and positive at +L
    let h = |d: f64| d - rhs(d);
    let dh = |d: f64| {
        let (s, co) = (theta0 + d).sin_cos();
        1.0 + a * co + c * s
    };
    let (mut lo, mut hi) = (-lip, lip);
    let mut d = 0.0;
    for k in 1..=max_iter {
        let hd = h(d);
        if hd.abs() <= tol {
            return Ok(solution(d, hd.abs(), k, true));
        }
        if hd < 0.0 {
            lo = d;
        } else {
            hi = d;
        }
        let slope = dh(d);
        let newton = d - hd / slope;
        d = if slope != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * lip.max(1.0) {
            let r = h(d).abs();
            if r <= tol {
                return Ok(solution(d, r, k, true));
            }
            return Err(Error::PhaseSolve { contraction: lip, residual: r });
        }
    }
    Err(Error::PhaseSolve { contraction: lip, residual: h(d).abs() })
}

fn phase_for(spec: &FieldSpec, x: Vec2, t: f64, epsilon: f64, frame: Frame, conv: PhaseConvention) -> Result<f64> {
    match frame {
        Frame::Lagrangian => Ok(phase_tilde(spec, x, t, epsilon)),
        Frame::Eulerian => Ok(solve_theta(spec, x, t, epsilon, THETA_TOL, conv)?.theta),
    }
}

/// Leading-order velocity: `u0 cos ψ - u0⊥ sin ψ` with `ψ = φ̃` (Lagrangian,
/// predicts `u(t, X(t,x))`) or `ψ = θ` (Eulerian, predicts `u(t, x)`).
pub fn predict_u(spec: &FieldSpec, x: Vec2, t: f64, epsilon: f64, frame: Frame, conv: PhaseConvention) -> Result<Vec2> {
    let psi = phase_for(spec, x, t, epsilon, frame, conv)?;
    let u0 = spec.u0.eval(x).0;
    let (s, c) = psi.sin_cos();
    Ok(u0 * c - u0.perp() * s)
}

fn density_factor(spec: &FieldSpec, x: Vec2, t: f64, psi: f64, variant: DensityVariant) -> f64 {
    let f = spec.eval(x);
    let g = f.grad_log_b();
    let a = t * f.u0.dot(g);
    let c = t * f.u0.perp().dot(g);
    let (s, co) = psi.sin_cos();
    match variant {
        DensityVariant::CosSin => 1.0 + a * co - c * s,
        DensityVariant::SinCos => 1.0 + a * s - c * co,
    }
}

/// Leading-order density. The first-order Jacobian factor is applied to
/// `ρ0(x)` as a divisor (conservative) or a multiplier (multiplicative).
pub fn predict_rho(
    spec: &FieldSpec,
    x: Vec2,
    t: f64,
    epsilon: f64,
    frame: Frame,
    variant: DensityVariant,
    conv: &Conventions,
) -> Result<f64> {
    let psi = phase_for(spec, x, t, epsilon, frame, conv.phase)?;
    let factor = density_factor(spec, x, t, psi, variant);
    if conv.density == DensityConvention::Conservative && factor <= 0.0 {
        return Err(Error::CausticCrossed { t, det: factor });
    }
    Ok(conv.density.apply(spec.rho0.eval(x).0, factor))
}

/// Lagrangian prediction bundle. `phi` is the numerical phase when
/// available; otherwise `ε φ̃` is used.
pub fn predict_lagrangian(
    spec: &FieldSpec,
    x: Vec2,
    t: f64,
    epsilon: f64,
    phi: Option<f64>,
    variant: DensityVariant,
    density: DensityConvention,
) -> AsymptoticPrediction {
    let (phi, phase_used) = match phi {
        Some(p) => (p, PhaseUsed::Numeric),
        None => (epsilon * phase_tilde(spec, x, t, epsilon), PhaseUsed::Tilde),
    };
    let (dx_pred, j_pred) = approx_dx_j(spec, x, t, epsilon, phi);
    let u0 = spec.u0.eval(x).0;
    let (s, c) = (phi / epsilon).sin_cos();
    let factor = density_factor(spec, x, t, phi / epsilon, variant);
    AsymptoticPrediction {
        x_pred: approx_x(spec, x, t, epsilon, phi),
        dx_pred,
        j_pred,
        u_pred: u0 * c - u0.perp() * s,
        rho_pred: density.apply(spec.rho0.eval(x).0, factor),
        order: RemainderOrder::Epsilon,
        phase_used,
    }
}

/// Time at which the first-order Jacobian can first vanish at `x`,
/// `1 / (|u0(x)| |∇log b(x)|)`.
pub fn predicted_caustic_time(spec: &FieldSpec, x: Vec2) -> f64 {
    let f = spec.eval(x);
    let k = f.u0.norm() * f.grad_log_b().norm();
    if k > 0.0 {
        1.0 / k
    } else {
        f64::INFINITY
    }
}

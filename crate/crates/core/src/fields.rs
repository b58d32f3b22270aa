//! Analytic magnetic intensity, initial velocity and initial density families.
//!
//! Every family carries closed-form first and second derivatives so that the
//! asymptotic checks downstream are never polluted by differentiation error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Mat2, Vec2};

/// Intensity `b(x)` of the out-of-plane magnetic field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MagneticField {
    /// `b0`
    Constant { b0: f64 },
    /// `b0 + a sin(k·x)`
    Sinusoidal { b0: f64, a: f64, k: Vec2 },
    /// `b0 + a exp(-|x - center|² / sigma²)`
    Gaussian {
        b0: f64,
        a: f64,
        center: Vec2,
        sigma: f64,
    },
    /// `b0 exp(lambda x1)`, only admissible for `x1` inside `window`.
    Exponential { b0: f64, lambda: f64, window: [f64; 2] },
}

impl MagneticField {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            MagneticField::Constant { b0 } => b0 > 0.0 && b0.is_finite(),
            MagneticField::Sinusoidal { b0, a, k } => b0 - a.abs() > 0.0 && k.is_finite() && b0.is_finite(),
            MagneticField::Gaussian { b0, a, sigma, center } => {
                b0 + a.min(0.0) > 0.0 && sigma > 0.0 && center.is_finite() && b0.is_finite() && a.is_finite()
            }
            MagneticField::Exponential { b0, lambda, window } => {
                b0 > 0.0 && lambda.is_finite() && window[0].is_finite() && window[1].is_finite() && window[0] < window[1]
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("magnetic field parameters do not keep b > 0: {self:?}")))
        }
    }

    /// Value, gradient and Hessian at `x`.
    pub fn eval(&self, x: Vec2) -> (f64, Vec2, Mat2) {
        match *self {
            MagneticField::Constant { b0 } => (b0, Vec2::ZERO, Mat2::ZERO),
            MagneticField::Sinusoidal { b0, a, k } => {
                let (s, c) = k.dot(x).sin_cos();
                (b0 + a * s, k * (a * c), k.outer(k) * (-a * s))
            }
            MagneticField::Gaussian { b0, a, center, sigma } => {
                let d = x - center;
                let s2 = sigma * sigma;
                let g = a * (-d.dot(d) / s2).exp();
                let grad = d * (-2.0 * g / s2);
                let hess = d.outer(d) * (4.0 * g / (s2 * s2)) - Mat2::IDENTITY * (2.0 * g / s2);
                (b0 + g, grad, hess)
            }
            MagneticField::Exponential { b0, lambda, .. } => {
                let b = b0 * (lambda * x.x).exp();
                (b, Vec2::new(lambda * b, 0.0), Mat2::diag(lambda * lambda * b, 0.0))
            }
        }
    }

    pub fn value(&self, x: Vec2) -> f64 {
        match *self {
            MagneticField::Constant { b0 } => b0,
            MagneticField::Sinusoidal { b0, a, k } => b0 + a * k.dot(x).sin(),
            _ => self.eval(x).0,
        }
    }

    /// Value and gradient only (the characteristic system never needs the Hessian).
    pub fn value_grad(&self, x: Vec2) -> (f64, Vec2) {
        match *self {
            MagneticField::Constant { b0 } => (b0, Vec2::ZERO),
            MagneticField::Sinusoidal { b0, a, k } => {
                let (s, c) = k.dot(x).sin_cos();
                (b0 + a * s, k * (a * c))
            }
            MagneticField::Exponential { b0, lambda, .. } => {
                let b = b0 * (lambda * x.x).exp();
                (b, Vec2::new(lambda * b, 0.0))
            }
            MagneticField::Gaussian { .. } => {
                let (b, g, _) = self.eval(x);
                (b, g)
            }
        }
    }

    /// Analytic upper bound of `b` (over the admissible window for the
    /// exponential family). Drives the oscillation-resolving step size.
    pub fn upper_bound(&self) -> f64 {
        match *self {
            MagneticField::Constant { b0 } => b0,
            MagneticField::Sinusoidal { b0, a, .. } => b0 + a.abs(),
            MagneticField::Gaussian { b0, a, .. } => b0 + a.max(0.0),
            MagneticField::Exponential { b0, lambda, window } => {
                b0 * (lambda * window[0]).exp().max((lambda * window[1]).exp())
            }
        }
    }

    /// Analytic lower bound `b_-` of `b`.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            MagneticField::Constant { b0 } => b0,
            MagneticField::Sinusoidal { b0, a, .. } => b0 - a.abs(),
            MagneticField::Gaussian { b0, a, .. } => b0 + a.min(0.0),
            MagneticField::Exponential { b0, lambda, window } => {
                b0 * (lambda * window[0]).exp().min((lambda * window[1]).exp())
            }
        }
    }
}

/// Initial velocity field `u0(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialVelocity {
    Constant { value: Vec2 },
    /// Rigid rotation `omega (x - center)⊥`.
    Rotation {
        omega: f64,
        #[serde(default)]
        center: Vec2,
    },
    /// `amplitude exp(-|x - center|² / sigma²)`.
    Modulated {
        amplitude: Vec2,
        #[serde(default)]
        center: Vec2,
        sigma: f64,
    },
}

impl InitialVelocity {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            InitialVelocity::Constant { value } => value.is_finite(),
            InitialVelocity::Rotation { omega, center } => omega.is_finite() && center.is_finite(),
            InitialVelocity::Modulated { amplitude, center, sigma } => {
                amplitude.is_finite() && center.is_finite() && sigma > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid initial velocity parameters: {self:?}")))
        }
    }

    /// Value and Jacobian (`jac[i][j] = ∂u_i/∂x_j`).
    pub fn eval(&self, x: Vec2) -> (Vec2, Mat2) {
        match *self {
            InitialVelocity::Constant { value } => (value, Mat2::ZERO),
            InitialVelocity::Rotation { omega, center } => {
                ((x - center).perp() * omega, Mat2::new(0.0, omega, -omega, 0.0))
            }
            InitialVelocity::Modulated { amplitude, center, sigma } => {
                let d = x - center;
                let s2 = sigma * sigma;
                let g = (-d.dot(d) / s2).exp();
                (amplitude * g, amplitude.outer(d * (-2.0 * g / s2)))
            }
        }
    }
}

/// Initial density `rho0(x) >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDensity {
    Constant { value: f64 },
    /// `base + amplitude exp(-|x - center|² / sigma²)`.
    Gaussian {
        base: f64,
        amplitude: f64,
        #[serde(default)]
        center: Vec2,
        sigma: f64,
    },
}

impl Default for InitialDensity {
    fn default() -> Self {
        InitialDensity::Constant { value: 1.0 }
    }
}

impl InitialDensity {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            InitialDensity::Constant { value } => value >= 0.0 && value.is_finite(),
            InitialDensity::Gaussian { base, amplitude, sigma, center } => {
                base >= 0.0 && amplitude >= 0.0 && sigma > 0.0 && center.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("initial density must be nonnegative: {self:?}")))
        }
    }

    pub fn eval(&self, x: Vec2) -> (f64, Vec2) {
        match *self {
            InitialDensity::Constant { value } => (value, Vec2::ZERO),
            InitialDensity::Gaussian { base, amplitude, center, sigma } => {
                let d = x - center;
                let s2 = sigma * sigma;
                let g = amplitude * (-d.dot(d) / s2).exp();
                (base + g, d * (-2.0 * g / s2))
            }
        }
    }
}

/// The full set of data defining one experiment: `b`, `u0` and `rho0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub b: MagneticField,
    pub u0: InitialVelocity,
    #[serde(default)]
    pub rho0: InitialDensity,
}

/// Exact evaluation of every field at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldValues {
    pub b: f64,
    pub grad_b: Vec2,
    pub hess_b: Mat2,
    pub u0: Vec2,
    pub jac_u0: Mat2,
    pub rho0: f64,
    pub grad_rho0: Vec2,
}

impl FieldValues {
    /// `∇ log b`.
    pub fn grad_log_b(&self) -> Vec2 {
        self.grad_b * (1.0 / self.b)
    }
}

impl FieldSpec {
    pub fn new(b: MagneticField, u0: InitialVelocity, rho0: InitialDensity) -> Result<Self> {
        let spec = FieldSpec { b, u0, rho0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.b.validate()?;
        self.u0.validate()?;
        self.rho0.validate()
    }

    /// Evaluates all fields; assumes the spec has been validated.
    pub fn eval(&self, x: Vec2) -> FieldValues {
        let (b, grad_b, hess_b) = self.b.eval(x);
        let (u0, jac_u0) = self.u0.eval(x);
        let (rho0, grad_rho0) = self.rho0.eval(x);
        FieldValues {
            b,
            grad_b,
            hess_b,
            u0,
            jac_u0,
            rho0,
            grad_rho0,
        }
    }
}

/// Validating evaluation of every field at `x`.
pub fn eval_fields(spec: &FieldSpec, x: Vec2) -> Result<FieldValues> {
    if !x.is_finite() {
        return Err(Error::Config(format!("evaluation point is not finite: {x:?}")));
    }
    spec.validate()?;
    Ok(spec.eval(x))
}

/// `(v1, v2) -> (v2, -v1)`.
pub fn perp(v: Vec2) -> Vec2 {
    v.perp()
}

/// Guiding-center drift `v = [(u0⊥·∇b) u0 - (u0·∇b) u0⊥] / (2 b²)`.
///
/// The gyration center of the trajectory from `x` moves with velocity `-ε v`.
pub fn drift_velocity(spec: &FieldSpec, x: Vec2) -> Vec2 {
    let (b, grad_b) = spec.b.value_grad(x);
    let (u0, _) = spec.u0.eval(x);
    let u0p = u0.perp();
    (u0 * u0p.dot(grad_b) - u0p * u0.dot(grad_b)) * (1.0 / (2.0 * b * b))
}

/// Axis-aligned rectangle `[min.x, max.x] × [min.y, max.y]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Rect { min, max }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min.is_finite() && self.max.is_finite() && self.min.x < self.max.x && self.min.y < self.max.y {
            Ok(())
        } else {
            Err(Error::Config(format!("degenerate rectangle: {self:?}")))
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// A rectangle sampled on a uniform `resolution × resolution` grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSample {
    pub rect: Rect,
    pub resolution: usize,
}

impl DomainSample {
    pub fn new(rect: Rect, resolution: usize) -> Result<Self> {
        let d = DomainSample { rect, resolution };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        self.rect.validate()?;
        if self.resolution < 2 {
            return Err(Error::Config(format!(
                "grid resolution must be at least 2, got {}",
                self.resolution
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        self.resolution == 0
    }

    /// Node `(i, j)` with `i` along x1.
    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        let n = (self.resolution - 1) as f64;
        let Rect { min, max } = self.rect;
        Vec2::new(
            min.x + (max.x - min.x) * i as f64 / n,
            min.y + (max.y - min.y) * j as f64 / n,
        )
    }

    /// All nodes, x1 varying fastest.
    pub fn points(&self) -> Vec<Vec2> {
        let n = self.resolution;
        (0..n)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .map(|(i, j)| self.node(i, j))
            .collect()
    }
}

/// Grid estimates of the norms entering the a priori bounds and the lifespan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub b_min: f64,
    pub b_min_at: Vec2,
    pub b_sup: f64,
    pub grad_b_sup: f64,
    pub hess_b_sup: f64,
    pub u0_sup: f64,
    pub grad_u0_sup: f64,
    /// `1 / (|u0|_∞ |∇b|_∞)`, infinite when either norm vanishes.
    #[serde(with = "crate::report::inf_as_string")]
    pub t_star: f64,
    pub resolution: usize,
}

impl HypothesisReport {
    /// Confinement radius `4 (ε/b_-) |u0| (1 + T |∇b| |u0| / b_-)`.
    pub fn confinement_radius(&self, epsilon: f64, horizon: f64) -> f64 {
        4.0 * epsilon / self.b_min * self.u0_sup * (1.0 + horizon * self.grad_b_sup * self.u0_sup / self.b_min)
    }

    /// `C_T = (4/b_-)(1 + T |∇b| |u0| / b_-)`.
    pub fn c_t(&self, horizon: f64) -> f64 {
        4.0 / self.b_min * (1.0 + horizon * self.grad_b_sup * self.u0_sup / self.b_min)
    }

    /// Gronwall bound on `|DX(t)|` for `t <= horizon`.
    pub fn dx_bound(&self, epsilon: f64, horizon: f64, t: f64) -> f64 {
        let c = self.c_t(horizon);
        (1.0 + c * epsilon * self.grad_u0_sup) * (2.0 * c * self.grad_b_sup * self.u0_sup * t).exp()
    }
}

/// Exhaustive grid estimate of the hypothesis norms; rejects `b <= 0`.
pub fn check_hypotheses(spec: &FieldSpec, domain: &DomainSample) -> Result<HypothesisReport> {
    domain.validate()?;
    spec.u0.validate()?;
    spec.rho0.validate()?;
    if let MagneticField::Exponential { window, .. } = spec.b {
        if domain.rect.min.x < window[0] || domain.rect.max.x > window[1] {
            return Err(Error::Config(format!(
                "domain x1-range [{}, {}] exceeds the exponential field window [{}, {}]",
                domain.rect.min.x, domain.rect.max.x, window[0], window[1]
            )));
        }
    }

    let mut rep = HypothesisReport {
        b_min: f64::INFINITY,
        b_min_at: Vec2::ZERO,
        b_sup: 0.0,
        grad_b_sup: 0.0,
        hess_b_sup: 0.0,
        u0_sup: 0.0,
        grad_u0_sup: 0.0,
        t_star: f64::INFINITY,
        resolution: domain.resolution,
    };
    for p in domain.points() {
        let f = spec.eval(p);
        if f.b <= 0.0 {
            return Err(Error::Hypothesis { point: p, value: f.b });
        }
        if f.b < rep.b_min {
            rep.b_min = f.b;
            rep.b_min_at = p;
        }
        rep.b_sup = rep.b_sup.max(f.b.abs());
        rep.grad_b_sup = rep.grad_b_sup.max(f.grad_b.norm());
        rep.hess_b_sup = rep.hess_b_sup.max(f.hess_b.norm());
        rep.u0_sup = rep.u0_sup.max(f.u0.norm());
        rep.grad_u0_sup = rep.grad_u0_sup.max(f.jac_u0.norm());
    }
    // Parameter validation last so that a violated lower bound on `b` is reported with its grid point.
    spec.b.validate()?;
    let denom = rep.u0_sup * rep.grad_b_sup;
    rep.t_star = if denom > 0.0 { 1.0 / denom } else { f64::INFINITY };
    Ok(rep)
}

//! Characteristics of `u_t + (u·∇)u + (b/ε) u⊥ = 0` together with their
//! variational equations.
//!
//! Along a characteristic the velocity is a pure rotation of `u0(x0)` by the
//! phase `φ/ε`, `φ(t) = ∫₀ᵗ b(X(s)) ds`. The reduced system integrates
//! `(X, φ, DX, Dφ)` using that closed form; the full system integrates
//! `(X, u)` of the Burgers form directly. Both carry exact `x0`-derivatives.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldSpec, MagneticField, Rect};
use crate::geom::{Mat2, Vec2};
use crate::rk::{self, Method, OdeSystem};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `(X, φ, DX, Dφ)` with `u` reconstructed from the phase.
    #[default]
    Reduced,
    /// `(X, u, φ, DX, Du, Dφ)` integrated from `du/dt = -(b/ε) u⊥`.
    Full,
}

/// How density relates to the Jacobian of the flow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityConvention {
    /// `ρ(t, X) = ρ0 / J`, the solution of the continuity equation.
    #[default]
    Conservative,
    /// `ρ(t, X) = ρ0 J`.
    Multiplicative,
}

impl DensityConvention {
    pub const ALL: [DensityConvention; 2] = [DensityConvention::Conservative, DensityConvention::Multiplicative];

    pub fn apply(self, rho0: f64, jacobian: f64) -> f64 {
        match self {
            DensityConvention::Conservative => rho0 / jacobian,
            DensityConvention::Multiplicative => rho0 * jacobian,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DensityConvention::Conservative => "conservative",
            DensityConvention::Multiplicative => "multiplicative",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Steps per radian of fast phase.
    pub eta: f64,
    pub h_max: f64,
    /// Accuracy target used by the cross-validation checks.
    pub abs_tol: f64,
    /// Trajectories leaving this rectangle abort with a domain-exit error.
    pub domain: Option<Rect>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Rk6,
            eta: 20.0,
            h_max: 1e-2,
            abs_tol: 1e-9,
            domain: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 1.0 && self.h_max > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Config(format!(
                "integrator needs eta >= 1, h_max > 0, abs_tol > 0: {self:?}"
            )));
        }
        if let Some(d) = &self.domain {
            d.validate()?;
        }
        Ok(())
    }

    /// `h = min(h_max, ε / (eta b_sup))`.
    pub fn step_size(&self, b: &MagneticField, epsilon: f64) -> f64 {
        self.h_max.min(epsilon / (self.eta * b.upper_bound()))
    }
}

/// Augmented characteristic state at time `t` for the seed `x0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub x0: Vec2,
    pub t: f64,
    pub x: Vec2,
    pub phi: f64,
    pub dx: Mat2,
    pub dphi: Vec2,
    pub u: Vec2,
}

impl ParticleState {
    pub fn initial(spec: &FieldSpec, x0: Vec2) -> Self {
        ParticleState {
            x0,
            t: 0.0,
            x: x0,
            phi: 0.0,
            dx: Mat2::IDENTITY,
            dphi: Vec2::ZERO,
            u: spec.u0.eval(x0).0,
        }
    }
}

/// Signed `det DX`; a sign change certifies crossing characteristics.
pub fn jacobian_det(state: &ParticleState) -> f64 {
    state.dx.det()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDiagnostics {
    /// `max | |u| - |u0(x0)| |` over every step.
    pub max_speed_drift: f64,
    /// Smallest signed Jacobian over every step.
    pub min_jacobian: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<ParticleState>,
    pub epsilon: f64,
    pub mode: Mode,
    pub diagnostics: TrajectoryDiagnostics,
}

impl Trajectory {
    pub fn last(&self) -> &ParticleState {
        self.states.last().expect("trajectory always holds the initial state")
    }

    /// CSV with columns `t, X1, X2, phi, DX11, DX12, DX21, DX22, J, u1, u2`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,X1,X2,phi,DX11,DX12,DX21,DX22,J,u1,u2")?;
        for s in &self.states {
            writeln!(
                w,
                "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
                s.t,
                s.x.x,
                s.x.y,
                s.phi,
                s.dx.a11,
                s.dx.a12,
                s.dx.a21,
                s.dx.a22,
                jacobian_det(s),
                s.u.x,
                s.u.y
            )?;
        }
        Ok(())
    }
}

/// Time derivative of the reduced state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDerivative {
    pub dx: Vec2,
    pub dphi: f64,
    pub ddx: Mat2,
    pub ddphi: Vec2,
}

/// Seed data that stays fixed along a reduced characteristic.
#[derive(Clone, Copy, Debug)]
struct SeedData {
    u0: Vec2,
    u0p: Vec2,
    du0: Mat2,
    du0p: Mat2,
}

impl SeedData {
    fn new(spec: &FieldSpec, x0: Vec2) -> Self {
        let (u0, du0) = spec.u0.eval(x0);
        SeedData {
            u0,
            u0p: u0.perp(),
            du0,
            du0p: du0.perp_rows(),
        }
    }

    fn velocity(&self, phase: f64) -> Vec2 {
        let (s, c) = phase.sin_cos();
        self.u0 * c - self.u0p * s
    }
}

fn reduced_derivative(
    seed: &SeedData,
    b: &MagneticField,
    inv_eps: f64,
    x: Vec2,
    phi: f64,
    dx: &Mat2,
    dphi: Vec2,
) -> StateDerivative {
    let (s, c) = (phi * inv_eps).sin_cos();
    let (bx, grad_b) = b.value_grad(x);
    let w = (seed.u0 * s + seed.u0p * c) * inv_eps;
    StateDerivative {
        dx: seed.u0 * c - seed.u0p * s,
        dphi: bx,
        ddx: seed.du0 * c - seed.du0p * s - w.outer(dphi),
        ddphi: dx.transpose().mul_vec(grad_b),
    }
}

/// Right-hand side of the reduced characteristic system at `state`.
pub fn rhs_reduced(state: &ParticleState, spec: &FieldSpec, epsilon: f64) -> StateDerivative {
    let seed = SeedData::new(spec, state.x0);
    reduced_derivative(&seed, &spec.b, 1.0 / epsilon, state.x, state.phi, &state.dx, state.dphi)
}

struct Reduced<'a> {
    seed: SeedData,
    b: &'a MagneticField,
    inv_eps: f64,
}

fn pack_reduced(s: &ParticleState) -> [f64; 9] {
    [s.x.x, s.x.y, s.phi, s.dx.a11, s.dx.a12, s.dx.a21, s.dx.a22, s.dphi.x, s.dphi.y]
}

fn unpack_reduced(y: &[f64]) -> (Vec2, f64, Mat2, Vec2) {
    (
        Vec2::new(y[0], y[1]),
        y[2],
        Mat2::new(y[3], y[4], y[5], y[6]),
        Vec2::new(y[7], y[8]),
    )
}

impl Reduced<'_> {
    fn derivative(&self, y: &[f64]) -> StateDerivative {
        let (x, phi, dx, dphi) = unpack_reduced(y);
        reduced_derivative(&self.seed, self.b, self.inv_eps, x, phi, &dx, dphi)
    }
}

impl OdeSystem<9> for Reduced<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 9]) -> [f64; 9] {
        let d = self.derivative(y);
        [d.dx.x, d.dx.y, d.dphi, d.ddx.a11, d.ddx.a12, d.ddx.a21, d.ddx.a22, d.ddphi.x, d.ddphi.y]
    }
}

/// Reduced system augmented with the density, `dρ/dt = -ρ tr(DU DX⁻¹)` where
/// `DU` is the seed-derivative of the Lagrangian velocity.
struct ReducedWithDensity<'a>(Reduced<'a>);

impl OdeSystem<10> for ReducedWithDensity<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 10]) -> [f64; 10] {
        let d = self.0.derivative(&y[..9]);
        let dx = Mat2::new(y[3], y[4], y[5], y[6]);
        // div u at X = tr(DU DX⁻¹); NaN propagates if DX is singular
        let div = dx.inverse().map_or(f64::NAN, |inv| d.ddx.mul_mat(&inv).trace());
        [
            d.dx.x,
            d.dx.y,
            d.dphi,
            d.ddx.a11,
            d.ddx.a12,
            d.ddx.a21,
            d.ddx.a22,
            d.ddphi.x,
            d.ddphi.y,
            -y[9] * div,
        ]
    }
}

struct Full<'a> {
    b: &'a MagneticField,
    inv_eps: f64,
}

// layout: X(0..2) u(2..4) φ(4) DX(5..9) Du(9..13) Dφ(13..15)
impl OdeSystem<15> for Full<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 15]) -> [f64; 15] {
        let x = Vec2::new(y[0], y[1]);
        let u = Vec2::new(y[2], y[3]);
        let dx = Mat2::new(y[5], y[6], y[7], y[8]);
        let du = Mat2::new(y[9], y[10], y[11], y[12]);
        let (bx, grad_b) = self.b.value_grad(x);
        let db = dx.transpose().mul_vec(grad_b);
        let du_dt = u.perp() * (-bx * self.inv_eps);
        let ddu = (u.perp().outer(db) + du.perp_rows() * bx) * (-self.inv_eps);
        [
            u.x, u.y, du_dt.x, du_dt.y, bx, du.a11, du.a12, du.a21, du.a22, ddu.a11, ddu.a12, ddu.a21, ddu.a22, db.x,
            db.y,
        ]
    }
}

fn unpack_full(x0: Vec2, t: f64, y: &[f64; 15]) -> ParticleState {
    ParticleState {
        x0,
        t,
        x: Vec2::new(y[0], y[1]),
        u: Vec2::new(y[2], y[3]),
        phi: y[4],
        dx: Mat2::new(y[5], y[6], y[7], y[8]),
        dphi: Vec2::new(y[13], y[14]),
    }
}

/// Normalizes requested output times: finite, nonnegative, strictly
/// increasing; `t = 0` is always the first sample.
pub fn normalize_times(times: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(times.len() + 1);
    out.push(0.0);
    for &t in times {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Config(format!("output time {t} is not a finite nonnegative number")));
        }
        let prev = *out.last().unwrap();
        if t == 0.0 && out.len() == 1 {
            continue;
        }
        if t <= prev {
            return Err(Error::Config("output times must be strictly increasing".into()));
        }
        out.push(t);
    }
    Ok(out)
}

/// `n` equally spaced times in `(0, t_end]`.
pub fn uniform_times(t_end: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| t_end * i as f64 / n as f64).collect()
}

/// Marches `y` through `times` (first entry is the start time) with steps no
/// longer than `h`, calling `visit` after every step, and returns the samples.
fn march<const N: usize, S: OdeSystem<N>>(
    sys: &S,
    method: Method,
    times: &[f64],
    h: f64,
    y0: [f64; N],
    mut visit: impl FnMut(f64, &[f64; N]) -> Result<()>,
) -> Result<(Vec<[f64; N]>, usize)> {
    let mut samples = Vec::with_capacity(times.len());
    samples.push(y0);
    let mut y = y0;
    let mut steps = 0;
    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let n = ((t1 - t0) / h).ceil().max(1.0) as usize;
        let dt = (t1 - t0) / n as f64;
        for i in 0..n {
            let t = t0 + i as f64 * dt;
            y = rk::step(sys, method, t, &y, dt);
            let t_new = if i + 1 == n { t1 } else { t + dt };
            visit(t_new, &y)?;
        }
        steps += n;
        samples.push(y);
    }
    Ok((samples, steps))
}

/// Integrates the characteristic from `x0` and samples it at `times`
/// (plus `t = 0`).
pub fn integrate(
    x0: Vec2,
    spec: &FieldSpec,
    epsilon: f64,
    times: &[f64],
    cfg: &IntegratorConfig,
    mode: Mode,
) -> Result<Trajectory> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let times = normalize_times(times)?;
    let h = cfg.step_size(&spec.b, epsilon);
    let speed0 = spec.u0.eval(x0).0.norm();
    let mut diag = TrajectoryDiagnostics {
        max_speed_drift: 0.0,
        min_jacobian: 1.0,
        steps: 0,
    };
    let domain = cfg.domain;
    let check_domain = |t: f64, x: Vec2| -> Result<()> {
        match domain {
            Some(r) if !r.contains(x) => Err(Error::DomainExit { seed: x0, t }),
            _ => Ok(()),
        }
    };
    check_domain(0.0, x0)?;

    let states = match mode {
        Mode::Reduced => {
            let sys = Reduced {
                seed: SeedData::new(spec, x0),
                b: &spec.b,
                inv_eps: 1.0 / epsilon,
            };
            let y0 = pack_reduced(&ParticleState::initial(spec, x0));
            let (samples, steps) = march(&sys, cfg.method, &times, h, y0, |t, y| {
                diag.min_jacobian = diag.min_jacobian.min(y[3] * y[6] - y[4] * y[5]);
                check_domain(t, Vec2::new(y[0], y[1]))
            })?;
            diag.steps = steps;
            samples
                .iter()
                .zip(&times)
                .map(|(y, &t)| {
                    let (x, phi, dx, dphi) = unpack_reduced(y);
                    let u = sys.seed.velocity(phi / epsilon);
                    diag.max_speed_drift = diag.max_speed_drift.max((u.norm() - speed0).abs());
                    ParticleState { x0, t, x, phi, dx, dphi, u }
                })
                .collect()
        }
        Mode::Full => {
            let sys = Full {
                b: &spec.b,
                inv_eps: 1.0 / epsilon,
            };
            let (u0, du0) = spec.u0.eval(x0);
            let mut y0 = [0.0; 15];
            y0[..4].copy_from_slice(&[x0.x, x0.y, u0.x, u0.y]);
            y0[5..9].copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
            y0[9..13].copy_from_slice(&[du0.a11, du0.a12, du0.a21, du0.a22]);
            let (samples, steps) = march(&sys, cfg.method, &times, h, y0, |t, y| {
                diag.min_jacobian = diag.min_jacobian.min(y[5] * y[8] - y[6] * y[7]);
                diag.max_speed_drift = diag.max_speed_drift.max((y[2].hypot(y[3]) - speed0).abs());
                check_domain(t, Vec2::new(y[0], y[1]))
            })?;
            diag.steps = steps;
            samples.iter().zip(&times).map(|(y, &t)| unpack_full(x0, t, y)).collect()
        }
    };
    Ok(Trajectory {
        states,
        epsilon,
        mode,
        diagnostics: diag,
    })
}

/// Reduced-mode state at the single time `t`.
pub fn integrate_to(x0: Vec2, spec: &FieldSpec, epsilon: f64, t: f64, cfg: &IntegratorConfig) -> Result<ParticleState> {
    let traj = integrate(x0, spec, epsilon, &[t], cfg, Mode::Reduced)?;
    Ok(*traj.last())
}

/// Density along a trajectory from the Jacobian, under `convention`.
pub fn rho_along(traj: &Trajectory, spec: &FieldSpec, convention: DensityConvention) -> Result<Vec<f64>> {
    let rho0 = spec.rho0.eval(traj.states[0].x0).0;
    traj.states
        .iter()
        .map(|s| {
            let j = jacobian_det(s);
            if j <= 0.0 {
                Err(Error::CausticCrossed { t: s.t, det: j })
            } else {
                Ok(convention.apply(rho0, j))
            }
        })
        .collect()
}

/// Density obtained by integrating the continuity equation
/// `dρ/dt = -ρ ∇·u` along the characteristic, independently of `det DX`.
pub fn integrate_continuity(
    x0: Vec2,
    spec: &FieldSpec,
    epsilon: f64,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    let times = normalize_times(times)?;
    let sys = ReducedWithDensity(Reduced {
        seed: SeedData::new(spec, x0),
        b: &spec.b,
        inv_eps: 1.0 / epsilon,
    });
    let mut y0 = [0.0; 10];
    y0[..9].copy_from_slice(&pack_reduced(&ParticleState::initial(spec, x0)));
    y0[9] = spec.rho0.eval(x0).0;
    let h = cfg.step_size(&spec.b, epsilon);
    let (samples, _) = march(&sys, cfg.method, &times, h, y0, |t, y| {
        let det = y[3] * y[6] - y[4] * y[5];
        if det <= 0.0 || !y[9].is_finite() {
            Err(Error::CausticCrossed { t, det })
        } else {
            Ok(())
        }
    })?;
    Ok(samples.iter().map(|y| y[9]).collect())
}

/// Result of a caustic scan over a seed ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausticReport {
    /// First time at which `det DX` changes sign along any seed.
    pub t_eps: Option<f64>,
    /// Seed realizing `t_eps`, or the seed with the smallest Jacobian when no
    /// crossing was found.
    pub argmin_seed: Vec2,
    pub min_jacobian: f64,
    pub seeds_scanned: usize,
    /// Seeds whose scan stopped early because they left the domain.
    pub exited: usize,
}

struct SeedScan {
    crossing: Option<f64>,
    min_jacobian: f64,
    exited: bool,
}

fn scan_seed(x0: Vec2, spec: &FieldSpec, epsilon: f64, cfg: &IntegratorConfig, t_max: f64) -> SeedScan {
    let sys = Reduced {
        seed: SeedData::new(spec, x0),
        b: &spec.b,
        inv_eps: 1.0 / epsilon,
    };
    let h = cfg.step_size(&spec.b, epsilon);
    let det = |y: &[f64; 9]| y[3] * y[6] - y[4] * y[5];
    let mut y = pack_reduced(&ParticleState::initial(spec, x0));
    let mut t = 0.0;
    let mut min_j = 1.0f64;
    let n = (t_max / h).ceil().max(1.0) as usize;
    let dt = t_max / n as f64;
    // bisect down to a millionth of a radian of fast phase
    let resolution = 1e-6 * epsilon / spec.b.upper_bound();
    for i in 0..n {
        let y_next = rk::step(&sys, cfg.method, t, &y, dt);
        let t_next = if i + 1 == n { t_max } else { t + dt };
        let j = det(&y_next);
        if let Some(r) = &cfg.domain {
            if !r.contains(Vec2::new(y_next[0], y_next[1])) {
                return SeedScan { crossing: None, min_jacobian: min_j, exited: true };
            }
        }
        if j <= 0.0 {
            let (mut lo, mut hi) = (t, t_next);
            while hi - lo > resolution {
                let mid = 0.5 * (lo + hi);
                let y_mid = rk::step(&sys, cfg.method, t, &y, mid - t);
                if det(&y_mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return SeedScan { crossing: Some(0.5 * (lo + hi)), min_jacobian: j.min(min_j), exited: false };
        }
        min_j = min_j.min(j);
        y = y_next;
        t = t_next;
    }
    SeedScan { crossing: None, min_jacobian: min_j, exited: false }
}

/// Smallest time at which characteristics from `seeds` cross, up to `t_max`.
pub fn detect_caustic(
    seeds: &[Vec2],
    spec: &FieldSpec,
    epsilon: f64,
    cfg: &IntegratorConfig,
    t_max: f64,
) -> CausticReport {
    let scans: Vec<SeedScan> = seeds
        .par_iter()
        .map(|&x0| scan_seed(x0, spec, epsilon, cfg, t_max))
        .collect();
    let mut report = CausticReport {
        t_eps: None,
        argmin_seed: seeds.first().copied().unwrap_or(Vec2::ZERO),
        min_jacobian: f64::INFINITY,
        seeds_scanned: seeds.len(),
        exited: 0,
    };
    let mut best_j = f64::INFINITY;
    for (scan, &seed) in scans.iter().zip(seeds) {
        report.exited += scan.exited as usize;
        report.min_jacobian = report.min_jacobian.min(scan.min_jacobian);
        match (scan.crossing, report.t_eps) {
            (Some(tc), None) => {
                report.t_eps = Some(tc);
                report.argmin_seed = seed;
            }
            (Some(tc), Some(best)) if tc < best => {
                report.t_eps = Some(tc);
                report.argmin_seed = seed;
            }
            _ => {}
        }
        if report.t_eps.is_none() && scan.min_jacobian < best_j {
            best_j = scan.min_jacobian;
            report.argmin_seed = seed;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{InitialDensity, InitialVelocity};

    fn spec(b: MagneticField, u: Vec2) -> FieldSpec {
        FieldSpec::new(b, InitialVelocity::Constant { value: u }, InitialDensity::default()).unwrap()
    }

    fn sinusoidal() -> MagneticField {
        MagneticField::Sinusoidal { b0: 2.0, a: 0.5, k: Vec2::new(1.0, 0.0) }
    }

    #[test]
    fn rest_state_derivative() {
        let s = spec(sinusoidal(), Vec2::ZERO);
        let x0 = Vec2::new(0.4, -0.2);
        let mut st = ParticleState::initial(&s, x0);
        st.phi = 0.37;
        st.t = 0.2;
        let d = rhs_reduced(&st, &s, 0.01);
        assert_eq!(d.dx, Vec2::ZERO);
        assert_eq!(d.dphi, s.b.value(x0));
        assert_eq!(d.ddx, Mat2::ZERO);
    }

    #[test]
    fn constant_field_derivative_is_a_rotation() {
        let (b0, eps, t) = (2.0, 0.01, 0.123);
        let u0 = Vec2::new(0.6, -0.8);
        let s = spec(MagneticField::Constant { b0 }, u0);
        let mut st = ParticleState::initial(&s, Vec2::new(1.0, 1.0));
        st.t = t;
        st.phi = b0 * t;
        let d = rhs_reduced(&st, &s, eps);
        let th = b0 * t / eps;
        let expect = u0 * th.cos() - u0.perp() * th.sin();
        assert!((d.dx - expect).max_abs() < 1e-13);
    }

    #[test]
    fn initial_derivative_is_u0_and_du0() {
        let u = InitialVelocity::Modulated { amplitude: Vec2::new(0.8, 0.6), center: Vec2::ZERO, sigma: 1.5 };
        let s = FieldSpec::new(sinusoidal(), u.clone(), InitialDensity::default()).unwrap();
        let x0 = Vec2::new(0.3, 0.7);
        let d = rhs_reduced(&ParticleState::initial(&s, x0), &s, 0.05);
        let (u0, du0) = u.eval(x0);
        assert_eq!(d.dx, u0);
        assert!((d.ddx - du0).max_abs() < 1e-15);
    }

    #[test]
    fn constant_field_closed_form() {
        let (b0, eps) = (2.0, 0.01);
        let s = spec(MagneticField::Constant { b0 }, Vec2::new(1.0, 0.0));
        let x0 = Vec2::new(0.5, -0.25);
        let traj = integrate(x0, &s, eps, &uniform_times(1.0, 100), &IntegratorConfig::default(), Mode::Reduced).unwrap();
        for st in &traj.states {
            let th = b0 * st.t / eps;
            let exact = x0 + Vec2::new(th.sin(), 1.0 - th.cos()) * (eps / b0);
            assert!((st.x - exact).norm() < 1e-10, "t={} err={}", st.t, (st.x - exact).norm());
            assert!((jacobian_det(st) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_velocity_stays_put() {
        let s = spec(sinusoidal(), Vec2::ZERO);
        let x0 = Vec2::new(0.1, 0.2);
        for mode in [Mode::Reduced, Mode::Full] {
            let traj = integrate(x0, &s, 0.02, &uniform_times(1.0, 10), &IntegratorConfig::default(), mode).unwrap();
            for st in &traj.states {
                assert_eq!(st.x, x0);
                assert!((st.dx - Mat2::IDENTITY).max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn reduced_and_full_agree() {
        let s = spec(sinusoidal(), Vec2::new(1.0, 0.0));
        let cfg = IntegratorConfig::default();
        let x0 = Vec2::new(0.2, 0.0);
        let r = integrate(x0, &s, 0.01, &[1.0], &cfg, Mode::Reduced).unwrap();
        let f = integrate(x0, &s, 0.01, &[1.0], &cfg, Mode::Full).unwrap();
        let (r, f) = (r.last(), f.last());
        assert!((r.x - f.x).norm() <= 10.0 * cfg.abs_tol, "{:e}", (r.x - f.x).norm());
        assert!((r.dx - f.dx).max_abs() <= 1e3 * cfg.abs_tol, "{:e}", (r.dx - f.dx).max_abs());
        assert!((r.phi - f.phi).abs() <= 10.0 * cfg.abs_tol);
    }

    #[test]
    fn domain_exit_is_reported() {
        let s = spec(MagneticField::Constant { b0: 2.0 }, Vec2::new(1.0, 0.0));
        let cfg = IntegratorConfig {
            domain: Some(Rect::new(Vec2::new(-1e-3, -1e-3), Vec2::new(1e-3, 1e-3))),
            ..IntegratorConfig::default()
        };
        let err = integrate(Vec2::ZERO, &s, 0.1, &[1.0], &cfg, Mode::Reduced).unwrap_err();
        assert!(matches!(err, Error::DomainExit { t, .. } if t > 0.0 && t < 0.01));
    }

    #[test]
    fn rho_conventions_at_start_and_for_constant_field() {
        let u = InitialVelocity::Constant { value: Vec2::new(1.0, 0.0) };
        let rho = InitialDensity::Gaussian { base: 0.5, amplitude: 1.0, center: Vec2::ZERO, sigma: 1.0 };
        let s = FieldSpec::new(MagneticField::Constant { b0: 2.0 }, u, rho.clone()).unwrap();
        let x0 = Vec2::new(0.3, 0.1);
        let traj = integrate(x0, &s, 0.05, &uniform_times(1.0, 20), &IntegratorConfig::default(), Mode::Reduced).unwrap();
        let r0 = rho.eval(x0).0;
        for conv in DensityConvention::ALL {
            for r in rho_along(&traj, &s, conv).unwrap() {
                assert!((r - r0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rho_along_rejects_crossed_trajectories() {
        let s = spec(MagneticField::Constant { b0: 2.0 }, Vec2::new(1.0, 0.0));
        let mut traj = integrate(Vec2::ZERO, &s, 0.05, &[0.5], &IntegratorConfig::default(), Mode::Reduced).unwrap();
        traj.states[1].dx = Mat2::diag(1.0, -0.1);
        assert!(matches!(
            rho_along(&traj, &s, DensityConvention::Conservative),
            Err(Error::CausticCrossed { .. })
        ));
    }

    #[test]
    fn no_caustic_for_constant_field_or_rest() {
        let cfg = IntegratorConfig::default();
        let seeds = [Vec2::ZERO, Vec2::new(0.5, 0.5)];
        let s = spec(MagneticField::Constant { b0: 2.0 }, Vec2::new(1.0, 0.0));
        assert!(detect_caustic(&seeds, &s, 0.05, &cfg, 10.0).t_eps.is_none());
        let s = spec(sinusoidal(), Vec2::ZERO);
        assert!(detect_caustic(&seeds, &s, 0.05, &cfg, 10.0).t_eps.is_none());
    }

    #[test]
    fn output_times_are_validated() {
        assert_eq!(normalize_times(&[0.0, 0.5, 1.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_times(&[0.5]).unwrap(), vec![0.0, 0.5]);
        assert!(normalize_times(&[0.5, 0.5]).is_err());
        assert!(normalize_times(&[-1.0]).is_err());
    }
}

//! Property tests for invariants of the characteristic flow, the explicit
//! predictions, the phase solver, the oscillatory quadrature and inversion.

use proptest::prelude::*;

use gyrolab::asymptotics::{
    approx_dx_j, approx_x, phase_tilde, predict_u, solve_theta, Frame, PhaseConvention,
};
use gyrolab::characteristics::{
    integrate, integrate_continuity, integrate_to, rho_along, DensityConvention, IntegratorConfig, Mode,
};
use gyrolab::harness::fit_order;
use gyrolab::inversion::invert_x;
use gyrolab::oscillatory::{nsp_bound, osc_integral, resolving_grid, OscillandSample, Trig};
use gyrolab::{FieldSpec, InitialDensity, InitialVelocity, MagneticField, Vec2};

fn sinusoidal(b0: f64, a: f64, k: (f64, f64), amp: (f64, f64), sigma: f64) -> FieldSpec {
    FieldSpec::new(
        MagneticField::Sinusoidal { b0, a, k: Vec2::new(k.0, k.1) },
        InitialVelocity::Modulated { amplitude: Vec2::new(amp.0, amp.1), center: Vec2::ZERO, sigma },
        InitialDensity::Gaussian { base: 1.0, amplitude: 0.5, center: Vec2::ZERO, sigma: 1.5 },
    )
    .unwrap()
}

fn field_strategy() -> impl Strategy<Value = FieldSpec> {
    (
        1.5f64..3.0,
        -0.5f64..0.5,
        (-1.5f64..1.5, -1.5f64..1.5),
        (-1.0f64..1.0, -1.0f64..1.0),
        1.0f64..4.0,
    )
        .prop_map(|(b0, a, k, amp, sigma)| sinusoidal(b0, a, k, amp, sigma))
}

fn point() -> impl Strategy<Value = Vec2> {
    (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(x, y)| Vec2::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn predicted_speed_matches_initial_speed(
        spec in field_strategy(), x in point(), t in 0.0f64..1.0, eps in 1e-3f64..1e-1,
    ) {
        let s0 = spec.u0.eval(x).0.norm();
        for frame in [Frame::Lagrangian, Frame::Eulerian] {
            if let Ok(u) = predict_u(&spec, x, t, eps, frame, PhaseConvention::Consistent) {
                prop_assert!((u.norm() - s0).abs() <= 1e-12 * (1.0 + s0));
            }
        }
    }

    #[test]
    fn predicted_jacobian_is_determinant_and_bounded_below(
        spec in field_strategy(), x in point(), t in 0.0f64..1.0, eps in 1e-3f64..1e-1,
    ) {
        let phi = eps * phase_tilde(&spec, x, t, eps);
        let (dx, j) = approx_dx_j(&spec, x, t, eps, phi);
        prop_assert!((j - dx.det()).abs() <= 1e-12 * (1.0 + j.abs()));
        let f = spec.eval(x);
        let lower = 1.0 - t * f.u0.norm() * f.grad_log_b().norm();
        prop_assert!(j >= lower - 1e-12);
    }

    #[test]
    fn explicit_trajectory_stays_within_confinement_scale(
        spec in field_strategy(), x in point(), t in 0.0f64..1.0, eps in 1e-3f64..1e-1,
    ) {
        // |X̃ - x| ≤ ε|u0|(2/b + t|∇log b|) by the triangle inequality
        let phi = eps * phase_tilde(&spec, x, t, eps);
        let f = spec.eval(x);
        let d = (approx_x(&spec, x, t, eps, phi) - x).norm();
        let bound = eps * f.u0.norm() * (2.0 / f.b + t * f.grad_log_b().norm());
        prop_assert!(d <= bound * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn phase_solution_is_unique(
        spec in field_strategy(), x in point(), t in 0.0f64..1.5, eps in 1e-3f64..1e-1, shift in -3.0f64..3.0,
    ) {
        let f = spec.eval(x);
        let g = f.grad_log_b();
        let (a, c) = (t * f.u0.dot(g), t * f.u0.perp().dot(g));
        prop_assume!(a.abs() + c.abs() < 0.9);
        let sol = solve_theta(&spec, x, t, eps, 1e-12, PhaseConvention::Consistent).unwrap();
        // a fixed-point run from a displaced start lands on the same root
        let theta0 = f.b * t / eps;
        let mut th = theta0 + shift;
        for _ in 0..3000 {
            th = theta0 - a * th.sin() - c * th.cos();
        }
        prop_assert!((th - sol.theta).abs() <= 1e-10);
        prop_assert!(sol.residual <= 1e-12);
    }

    #[test]
    fn oscillatory_integral_is_linear(
        p in -2.0f64..2.0, q in -2.0f64..2.0, lambda in -3.0f64..3.0, b in 1.0f64..3.0, eps in 0.02f64..0.2,
    ) {
        let times = resolving_grid(1.0, eps, b, 16);
        let f1: Vec<f64> = times.iter().map(|s| p + q * s).collect();
        let f2: Vec<f64> = times.iter().map(|s| (3.0 * s).sin()).collect();
        let mix: Vec<f64> = f1.iter().zip(&f2).map(|(u, v)| u + lambda * v).collect();
        let beta = vec![b; times.len()];
        let mk = |f: Vec<f64>| OscillandSample::new(times.clone(), f, beta.clone(), b, None).unwrap();
        for kind in [Trig::Cos, Trig::Sin] {
            let i1 = osc_integral(&mk(f1.clone()), eps, kind).unwrap();
            let i2 = osc_integral(&mk(f2.clone()), eps, kind).unwrap();
            let im = osc_integral(&mk(mix.clone()), eps, kind).unwrap();
            prop_assert!((im - (i1 + lambda * i2)).abs() <= 1e-12 * (1.0 + i1.abs() + i2.abs()));
        }
    }

    #[test]
    fn oscillatory_integral_of_linear_data_matches_closed_form(
        p in -2.0f64..2.0, q in -2.0f64..2.0, b in 1.0f64..3.0, eps in 0.005f64..0.2,
    ) {
        let t_end = 1.0;
        let times = resolving_grid(t_end, eps, b, 16);
        let f: Vec<f64> = times.iter().map(|s| p + q * s).collect();
        let sample = OscillandSample::new(times.clone(), f, vec![b; times.len()], b, Some(q.abs() / b)).unwrap();
        let k = b / eps;
        let prim_cos = |s: f64| (p + q * s) * (k * s).sin() / k + q * (k * s).cos() / (k * k);
        let prim_sin = |s: f64| -(p + q * s) * (k * s).cos() / k + q * (k * s).sin() / (k * k);
        let exact_cos = prim_cos(t_end) - prim_cos(0.0);
        let exact_sin = prim_sin(t_end) - prim_sin(0.0);
        let ic = osc_integral(&sample, eps, Trig::Cos).unwrap();
        let is = osc_integral(&sample, eps, Trig::Sin).unwrap();
        prop_assert!((ic - exact_cos).abs() <= 1e-12);
        prop_assert!((is - exact_sin).abs() <= 1e-12);
        prop_assert!(exact_cos.abs() <= nsp_bound(&sample, eps, Trig::Cos) + 1e-12);
        prop_assert!(exact_sin.abs() <= nsp_bound(&sample, eps, Trig::Sin) + 1e-12);
    }

    #[test]
    fn order_fit_tolerates_bounded_noise(c in 0.1f64..10.0, order in 0.5f64..2.5, noise in prop::collection::vec(-0.1f64..0.1, 5)) {
        let eps: [f64; 5] = [0.1, 0.05, 0.025, 0.0125, 0.00625];
        let errors: Vec<f64> = eps.iter().zip(&noise).map(|(e, n)| c * e.powf(order) * (1.0 + n)).collect();
        let fit = fit_order(&errors, &eps).unwrap();
        // ±10% multiplicative noise moves log E by at most 0.106 at each point
        prop_assert!((fit.slope.unwrap() - order).abs() <= 0.15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reduced_and_full_systems_agree(spec in field_strategy(), x0 in point(), eps in 0.01f64..0.1) {
        let cfg = IntegratorConfig::default();
        let times = [0.25, 0.5, 1.0];
        let r = integrate(x0, &spec, eps, &times, &cfg, Mode::Reduced).unwrap();
        let f = integrate(x0, &spec, eps, &times, &cfg, Mode::Full).unwrap();
        for (a, b) in r.states.iter().zip(&f.states) {
            prop_assert!((a.x - b.x).max_abs() <= 10.0 * cfg.abs_tol);
            prop_assert!((a.u - b.u).max_abs() <= 10.0 * cfg.abs_tol);
            prop_assert!((a.dx - b.dx).max_abs() <= 10.0 * cfg.abs_tol);
        }
    }

    #[test]
    fn step_refinement_is_below_tolerance(spec in field_strategy(), x0 in point(), eps in 0.01f64..0.1) {
        let coarse = IntegratorConfig::default();
        let fine = IntegratorConfig { eta: 2.0 * coarse.eta, h_max: 0.5 * coarse.h_max, ..coarse.clone() };
        let a = integrate_to(x0, &spec, eps, 1.0, &coarse).unwrap();
        let b = integrate_to(x0, &spec, eps, 1.0, &fine).unwrap();
        prop_assert!((a.x - b.x).max_abs() <= coarse.abs_tol);
        prop_assert!((a.phi - b.phi).abs() <= coarse.abs_tol);
    }

    #[test]
    fn numerical_phase_is_bounded_by_field_extrema(spec in field_strategy(), x0 in point(), eps in 0.01f64..0.1) {
        let traj = integrate(x0, &spec, eps, &[0.3, 0.7, 1.0], &IntegratorConfig::default(), Mode::Reduced).unwrap();
        let (lo, hi) = (spec.b.lower_bound(), spec.b.upper_bound());
        for s in &traj.states {
            prop_assert!(s.phi >= lo * s.t * (1.0 - 1e-12));
            prop_assert!(s.phi <= hi * s.t * (1.0 + 1e-12));
        }
    }

    #[test]
    fn conservative_density_matches_continuity_equation(spec in field_strategy(), x0 in point(), eps in 0.01f64..0.1) {
        let cfg = IntegratorConfig::default();
        let times = [0.5, 1.0];
        let traj = integrate(x0, &spec, eps, &times, &cfg, Mode::Reduced).unwrap();
        let rho = rho_along(&traj, &spec, DensityConvention::Conservative).unwrap();
        let cont = integrate_continuity(x0, &spec, eps, &times, &cfg).unwrap();
        for (a, b) in rho.iter().zip(&cont) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn inversion_roundtrips(spec in field_strategy(), x in point(), eps in 0.01f64..0.05) {
        let cfg = IntegratorConfig::default();
        let p = invert_x(&spec, x, 0.5, eps, &cfg, 1e-11).unwrap();
        let back = integrate_to(p.y, &spec, eps, 0.5, &cfg).unwrap();
        prop_assert!((back.x - x).norm() <= 1e-10);
        // |u0| ≤ √2 < 1.5 for the sampled amplitudes
        let scale = 5.0 * eps * 1.5 / spec.b.lower_bound();
        prop_assert!((p.y - x).norm() <= scale);
    }
}

#[test]
fn density_of_exponential_field_matches_continuity() {
    let spec = FieldSpec::new(
        MagneticField::Exponential { b0: 2.0, lambda: 1.0, window: [-1.0, 1.0] },
        InitialVelocity::Constant { value: Vec2::new(1.0, 0.0) },
        InitialDensity::Constant { value: 1.0 },
    )
    .unwrap();
    let cfg = IntegratorConfig::default();
    let x0 = Vec2::new(0.0, 0.0);
    let traj = integrate(x0, &spec, 1e-3, &[0.5], &cfg, Mode::Reduced).unwrap();
    let rho = rho_along(&traj, &spec, DensityConvention::Conservative).unwrap();
    let cont = integrate_continuity(x0, &spec, 1e-3, &[0.5], &cfg).unwrap();
    assert!((rho[1] - cont[1]).abs() <= 1e-6, "{} vs {}", rho[1], cont[1]);
}

#[test]
fn constant_field_inverse_is_closed_form() {
    let (b0, eps, t) = (2.0, 1e-2, 0.37);
    let u0 = Vec2::new(0.6, -0.3);
    let spec = FieldSpec::new(
        MagneticField::Constant { b0 },
        InitialVelocity::Constant { value: u0 },
        InitialDensity::default(),
    )
    .unwrap();
    let x = Vec2::new(0.4, 0.1);
    let th = b0 * t / eps;
    // X(t, y) = y + (ε/b0)(u0 sin θ + u0⊥ (cos θ - 1)), a pure translation
    let shift = (u0 * th.sin() + u0.perp() * (th.cos() - 1.0)) * (eps / b0);
    let p = invert_x(&spec, x, t, eps, &IntegratorConfig::default(), 1e-12).unwrap();
    assert!((p.y - (x - shift)).norm() <= 1e-10);
    assert!(p.iterations <= 2);
}

#[test]
fn sinusoidal_inversion_converges_quickly() {
    let spec = sinusoidal(2.0, 0.5, (1.0, 0.0), (0.8, 0.6), 3.0);
    let cfg = IntegratorConfig::default();
    for x in [Vec2::new(0.0, 0.0), Vec2::new(1.3, -0.4), Vec2::new(-1.7, 1.9)] {
        let p = invert_x(&spec, x, 0.5, 1e-2, &cfg, 1e-11).unwrap();
        assert!(p.iterations <= 5, "{} iterations", p.iterations);
        assert!((p.y - x).norm() <= 5.0 * 1e-2 * 1.0 / spec.b.lower_bound());
    }
}

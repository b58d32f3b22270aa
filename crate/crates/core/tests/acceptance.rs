//! Acceptance suite: one test per criterion, each printing a single
//! `[criterion N] ... PASS/FAIL` line. The sinusoidal sweep is shared.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gyrolab::asymptotics::{solve_theta, DensityVariant, PhaseConvention};
use gyrolab::characteristics::{integrate, uniform_times, DensityConvention, IntegratorConfig, Mode};
use gyrolab::config::{ExperimentConfig, NspOptions};
use gyrolab::fields::{DomainSample, FieldSpec, InitialDensity, InitialVelocity, MagneticField, Rect};
use gyrolab::harness::{run_caustic, run_nsp, run_sweep};
use gyrolab::report::{emit_report, Claim, Format, Status, SweepReport};
use gyrolab::Vec2;

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn sinusoidal_report() -> &'static SweepReport {
    static REPORT: OnceLock<SweepReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let cfg = ExperimentConfig::load(&config_path("sinusoidal.toml")).unwrap();
        run_sweep(&cfg).unwrap()
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn claim(r: &SweepReport, c: Claim) -> &gyrolab::report::ClaimSummary {
    r.claims.iter().find(|s| s.claim == c).unwrap()
}

#[test]
fn criterion_01_constant_field_exactness() {
    let start = Instant::now();
    let (b0, eps) = (2.0, 1e-2);
    let spec = FieldSpec::new(
        MagneticField::Constant { b0 },
        InitialVelocity::Constant { value: Vec2::new(1.0, 0.0) },
        InitialDensity::default(),
    )
    .unwrap();
    let x0 = Vec2::new(0.3, -0.7);
    let traj = integrate(x0, &spec, eps, &uniform_times(1.0, 100), &IntegratorConfig::default(), Mode::Reduced).unwrap();
    // u = u0 cos θ - u0⊥ sin θ with u⊥ = (u2, -u1) gives u = (cos θ, sin θ)
    // for u0 = (1, 0), hence X - x0 = (ε/b0)(sin θ, 1 - cos θ).
    let err = traj
        .states
        .iter()
        .map(|s| {
            let th = b0 * s.t / eps;
            let exact = x0 + Vec2::new(th.sin(), 1.0 - th.cos()) * (eps / b0);
            (s.x - exact).max_abs()
        })
        .fold(0.0, f64::max);
    let elapsed = start.elapsed().as_secs_f64();
    let ok = traj.states.len() == 101 && err <= 1e-7 && elapsed < 1.0;
    println!("[criterion 1] constant-field closed form: max error {err:.3e} over 100 times in {elapsed:.3}s -> {}", verdict(ok));
    assert!(ok);
}

#[test]
fn criterion_02_speed_conservation() {
    let start = Instant::now();
    let spec = FieldSpec::new(
        MagneticField::Sinusoidal { b0: 2.0, a: 0.5, k: Vec2::new(1.0, 0.0) },
        InitialVelocity::Modulated { amplitude: Vec2::new(0.8, 0.6), center: Vec2::ZERO, sigma: 3.0 },
        InitialDensity::default(),
    )
    .unwrap();
    let seeds = DomainSample::new(Rect::new(Vec2::new(-2.0, -2.0), Vec2::new(2.0, 2.0)), 16).unwrap().points();
    let cfg = IntegratorConfig::default();
    let mut drift = [0.0f64; 2];
    for (k, mode) in [Mode::Reduced, Mode::Full].into_iter().enumerate() {
        for &x0 in &seeds {
            let traj = integrate(x0, &spec, 1e-2, &[1.0], &cfg, mode).unwrap();
            drift[k] = drift[k].max(traj.diagnostics.max_speed_drift);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = drift.iter().all(|&d| d <= 1e-7) && elapsed < 30.0;
    println!(
        "[criterion 2] speed conservation on 16x16 seeds: reduced {:.3e}, full {:.3e} in {elapsed:.1}s -> {}",
        drift[0],
        drift[1],
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_03_confinement() {
    let r = sinusoidal_report();
    let bounds_ok = r
        .per_epsilon
        .iter()
        .all(|e| e.bounds.iter().find(|b| b.name == "confinement").is_some_and(|b| b.pass));
    let ratios: Vec<f64> = r.per_epsilon.iter().map(|e| e.confinement_ratio.unwrap()).collect();
    let spread = ratios.iter().copied().fold(0.0, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let ok = bounds_ok && r.per_epsilon.len() == 5 && spread < 2.0;
    println!(
        "[criterion 3] confinement bound at every sample for all ε: {bounds_ok}; max|X-x|/ε spread {spread:.3} -> {}",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_04_second_order_trajectory() {
    let r = sinusoidal_report();
    assert_eq!(r.epsilons, vec![0.1, 0.05, 0.025, 0.0125, 0.00625]);
    let c = claim(r, Claim::TrajectoryExpansion);
    let slope = c.fit.slope.unwrap();
    let ok = (1.7..=2.3).contains(&slope) && c.fit.points_used == 5;
    println!("[criterion 4] trajectory expansion slope {slope:.3} in [1.7, 2.3] -> {}", verdict(ok));
    assert!(ok);
}

#[test]
fn criterion_05_first_order_claims() {
    let r = sinusoidal_report();
    let claims = [
        Claim::JacobianExpansion,
        Claim::LagrangianVelocity,
        Claim::LagrangianDensity,
        Claim::EulerianVelocity,
        Claim::EulerianDensity,
    ];
    let slopes: Vec<f64> = claims.iter().map(|&c| claim(r, c).fit.slope.unwrap()).collect();
    let slopes_ok = slopes.iter().all(|s| (0.8..=1.2).contains(s));
    let t_e = 0.5 * r.hypotheses.t_star;
    let nodes_ok = r.eulerian_resolution == Some(8)
        && r.per_epsilon.iter().all(|e| {
            e.eulerian.as_ref().is_some_and(|s| s.nodes == 64 && s.converged == 64 && (s.time - t_e).abs() < 1e-12)
        });
    let ok = slopes_ok && nodes_ok;
    let listing: Vec<String> = claims.iter().zip(&slopes).map(|(c, s)| format!("{} {s:.3}", c.name())).collect();
    println!(
        "[criterion 5] first-order slopes [{}]; 8x8 Eulerian grid fully converged at 0.5 t_star: {nodes_ok} -> {}",
        listing.join(", "),
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_06_oscillatory_bounds() {
    let opts = NspOptions { samples: 100, epsilons: vec![1e-1, 1e-2, 1e-3], rng_seed: 6, ..Default::default() };
    let s = run_nsp(&opts);
    let ok = s.cases == 300 && s.failures.is_empty() && s.violations == 0 && s.min_margin >= -1e-12;
    println!(
        "[criterion 6] oscillatory-integral bound on {} cases: min margin {:.3e}, {} violations -> {}",
        s.cases,
        s.min_margin,
        s.violations,
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_07_lifespan_and_caustic() {
    let r = sinusoidal_report();
    let l = r.lifespan.as_ref().unwrap();
    let smallest: Vec<f64> = r.epsilons.iter().rev().take(2).rev().copied().collect();
    let life_ok = l.pass
        && (l.horizon - 0.9 * r.hypotheses.t_star).abs() < 1e-12
        && l.entries.iter().map(|e| e.epsilon).collect::<Vec<_>>() == smallest
        && l.entries.iter().all(|e| e.min_jacobian.unwrap() > 0.05);

    let cfg = ExperimentConfig::load(&config_path("caustic.toml")).unwrap();
    let opts = cfg.caustic.clone().unwrap();
    assert_eq!(opts.epsilon, 1e-3);
    let c = run_caustic(&cfg.fields, &opts, &cfg.integrator());
    let t = c.scan.t_eps.unwrap_or(f64::NAN);
    let caustic_ok = (c.predicted - 1.0).abs() < 1e-12 && ((t - 1.0) / 1.0).abs() <= 0.1;
    let min_j: Vec<String> = l.entries.iter().map(|e| format!("{:.3}", e.min_jacobian.unwrap_or(f64::NAN))).collect();
    let ok = life_ok && caustic_ok;
    println!(
        "[criterion 7] min J at 0.9 t_star = [{}] (> 0.05); caustic at t = {t:.5} vs predicted 1 -> {}",
        min_j.join(", "),
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_08_density_adjudication() {
    let r = sinusoidal_report();
    let cont = r.per_epsilon.iter().map(|e| e.continuity_max_diff.unwrap()).fold(0.0, f64::max);
    let d = &r.density;
    let lw = &d.candidates[d.lagrangian_winner.unwrap()];
    let ew = &d.candidates[d.eulerian_winner.unwrap()];
    let winner_ok = lw.variant == DensityVariant::CosSin
        && lw.convention == DensityConvention::Conservative
        && ew.variant == lw.variant
        && ew.convention == lw.convention
        && (0.8..=1.2).contains(&lw.lagrangian_fit.slope.unwrap())
        && (0.8..=1.2).contains(&ew.eulerian_fit.slope.unwrap());
    // the other trig variant: error does not decay with ε and stays O(1)·t
    let other = d
        .candidates
        .iter()
        .find(|c| c.variant == DensityVariant::SinCos && c.convention == DensityConvention::Conservative)
        .unwrap();
    let other_floor = other.lagrangian_errors.iter().map(|e| e.unwrap()).fold(f64::INFINITY, f64::min);
    let winner_last = lw.lagrangian_errors.last().unwrap().unwrap();
    let floor_ok = other.lagrangian_fit.slope.unwrap().abs() < 0.3 && other_floor > 10.0 * winner_last;
    let ok = cont <= 1e-6 && winner_ok && floor_ok;
    println!(
        "[criterion 8] continuity vs rho0/J {cont:.2e}; winner {} (slope {:.3}); sin_cos floor {other_floor:.3e} (slope {:.3}) -> {}",
        lw.label(),
        lw.lagrangian_fit.slope.unwrap(),
        other.lagrangian_fit.slope.unwrap(),
        verdict(ok)
    );
    assert!(ok);
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&config_path("sinusoidal.toml")).unwrap();
    cfg.name = "determinism".into();
    cfg.epsilons = vec![0.1, 0.05, 0.025];
    cfg.seeds = gyrolab::config::SeedSet::Grid(
        DomainSample::new(Rect::new(Vec2::new(-2.0, -2.0), Vec2::new(2.0, 2.0)), 6).unwrap(),
    );
    cfg.domain.resolution = 201;
    if let Some(e) = cfg.eulerian.as_mut() {
        e.grid.resolution = 4;
    }
    if let Some(n) = cfg.nsp.as_mut() {
        n.samples = 8;
        n.epsilons = vec![0.1, 0.01];
    }
    cfg
}

fn emitted(report: &SweepReport) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(report, dir.path(), &Format::ALL).unwrap();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn criterion_09_determinism() {
    let cfg = small_config();
    let run_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_sweep(&cfg).unwrap())
    };
    let serial = emitted(&run_with(1));
    let parallel = emitted(&run_with(4));
    let again = emitted(&run_with(4));
    let full_a = emitted(sinusoidal_report());
    let full_b = emitted(sinusoidal_report());
    let ok = serial.len() == 5 && serial == parallel && parallel == again && full_a == full_b;
    println!(
        "[criterion 9] {} report files byte-identical across 1/4 workers and reruns -> {}",
        serial.len(),
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_10_phase_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut cases = 0;
    let mut worst_fp: f64 = 0.0;
    let mut worst_bis: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    while cases < 1000 {
        let spec = FieldSpec::new(
            MagneticField::Sinusoidal {
                b0: rng.gen_range(1.5..3.0),
                a: rng.gen_range(-0.5..0.5),
                k: Vec2::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)),
            },
            InitialVelocity::Modulated {
                amplitude: Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                center: Vec2::ZERO,
                sigma: rng.gen_range(1.0..4.0),
            },
            InitialDensity::default(),
        )
        .unwrap();
        let x = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let t = rng.gen_range(0.0..2.0);
        let eps = 10f64.powf(rng.gen_range(-3.0..-1.0));
        let f = spec.eval(x);
        let g = f.grad_log_b();
        let (a, c) = (t * f.u0.dot(g), t * f.u0.perp().dot(g));
        let l = a.abs() + c.abs();
        if l >= 0.9 {
            continue;
        }
        cases += 1;
        let theta0 = f.b * t / eps;
        let rhs = |th: f64| theta0 - a * th.sin() - c * th.cos();
        // fixed-point oracle on θ itself
        let mut th = theta0;
        for _ in 0..2000 {
            th = rhs(th);
        }
        // bisection oracle on θ - RHS(θ), increasing because L < 1
        let (mut lo, mut hi) = (theta0 - l - 1e-9, theta0 + l + 1e-9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - rhs(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let bis = 0.5 * (lo + hi);
        let sol = solve_theta(&spec, x, t, eps, 1e-12, PhaseConvention::Consistent).unwrap();
        worst_fp = worst_fp.max((sol.theta - th).abs());
        worst_bis = worst_bis.max((sol.theta - bis).abs());
        worst_res = worst_res.max(sol.residual);
    }
    let ok = worst_fp <= 1e-10 && worst_bis <= 1e-10 && worst_res <= 1e-12;
    println!(
        "[criterion 10] phase solver on {cases} cases: vs fixed point {worst_fp:.2e}, vs bisection {worst_bis:.2e}, residual {worst_res:.2e} -> {}",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn sinusoidal_sweep_passes_overall() {
    let r = sinusoidal_report();
    assert!(r.claims.iter().all(|c| c.status == Status::Pass), "{:#?}", r.claims);
    assert!(r.pass);
}

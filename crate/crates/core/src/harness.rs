//! ε-sweeps: integrate seed ensembles, compare against the asymptotic
//! predictions, fit convergence orders and check the a priori bounds.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::asymptotics::{
    approx_dx_j, approx_x, predict_rho, predict_u, predicted_caustic_time, Conventions, DensityVariant, Frame,
    PhaseConvention,
};
use crate::characteristics::{
    detect_caustic, integrate, integrate_continuity, jacobian_det, uniform_times, DensityConvention, IntegratorConfig,
    Mode,
};
use crate::config::{CausticOptions, ExperimentConfig, LifespanOptions, NspOptions};
use crate::error::{Error, Result};
use crate::fields::{check_hypotheses, FieldSpec, HypothesisReport};
use crate::geom::Vec2;
use crate::inversion::eulerian_fields;
use crate::oscillatory::{resolving_grid, verify_nsp, OscillandSample, MIN_POINTS_PER_PERIOD, NSP_TOLERANCE};
use crate::report::*;

/// Direct continuity integration must match `ρ0/J` to this accuracy.
pub const CONTINUITY_TOLERANCE: f64 = 1e-6;
/// Relative rounding slack on the a priori bounds.
const ROUNDING: f64 = 1e-12;
/// Largest admissible spread `max/min` of `max |X - x| / ε` over the sweep.
pub const CONFINEMENT_SPREAD: f64 = 2.0;

/// Per-node Eulerian errors: velocity per phase convention, density per
/// candidate, and the claimed density per phase convention.
type NodeErrors = ([f64; 2], [f64; N_CANDIDATES], [f64; 2]);

/// Fits `log e = slope · log ε + intercept` to strictly positive errors.
/// Zero errors are dropped and flagged; if nothing remains the fit is
/// flagged as an exact regime.
pub fn fit_order(errors: &[f64], epsilons: &[f64]) -> Result<OrderFit> {
    if errors.len() != epsilons.len() {
        return Err(Error::Config(format!(
            "fit_order: {} errors for {} epsilons",
            errors.len(),
            epsilons.len()
        )));
    }
    if errors.iter().chain(epsilons).any(|v| !(v.is_finite() && *v >= 0.0)) || epsilons.contains(&0.0) {
        return Err(Error::Config("fit_order needs finite nonnegative errors and positive epsilons".into()));
    }
    let errs: Vec<Option<f64>> = errors.iter().map(|&e| Some(e)).collect();
    Ok(fit_order_with_floor(&errs, epsilons, 0.0))
}

/// As [`fit_order`], treating errors `<= floor` as noise and missing entries
/// as unavailable.
pub fn fit_order_with_floor(errors: &[Option<f64>], epsilons: &[f64], floor: f64) -> OrderFit {
    let mut flags = Vec::new();
    let mut pts = Vec::new();
    let (mut below, mut missing) = (0, 0);
    for (e, &eps) in errors.iter().zip(epsilons) {
        match e {
            None => missing += 1,
            Some(v) if !v.is_finite() => missing += 1,
            Some(v) if *v <= floor => below += 1,
            Some(v) => pts.push((eps.ln(), v.ln())),
        }
    }
    let mut fit = OrderFit {
        slope: None,
        intercept: None,
        constant: None,
        residual: None,
        points_used: pts.len(),
        flags: Vec::new(),
    };
    if errors.is_empty() {
        flags.push(FLAG_NO_DATA.to_string());
    }
    if below > 0 {
        flags.push(FLAG_NOISE_FLOOR.to_string());
        if pts.is_empty() && missing == 0 {
            flags.push(FLAG_EXACT.to_string());
        }
    }
    if missing > 0 {
        flags.push(format!("{missing} missing"));
    }
    if pts.len() < 3 {
        if !errors.is_empty() && !flags.iter().any(|f| f == FLAG_EXACT) {
            flags.push(FLAG_TOO_FEW.to_string());
        }
        fit.flags = flags;
        return fit;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    fit.slope = Some(slope);
    fit.intercept = Some(intercept);
    fit.constant = Some(intercept.exp());
    fit.residual = Some((rss / n).sqrt());
    fit.flags = flags;
    fit
}

fn status_of(fit: &OrderFit, window: [f64; 2]) -> Status {
    match fit.slope {
        Some(s) if s >= window[0] && s <= window[1] => Status::Pass,
        Some(_) => Status::Fail,
        None if fit.is_exact() => Status::ExactRegime,
        None if fit.flags.iter().any(|f| f == FLAG_NO_DATA) => Status::NoData,
        None => Status::Fail,
    }
}

const N_CANDIDATES: usize = 4;

/// Density candidates in report order: variants outer, conventions inner.
fn candidates() -> [(DensityVariant, DensityConvention); N_CANDIDATES] {
    let mut out = [(DensityVariant::CosSin, DensityConvention::Conservative); N_CANDIDATES];
    let mut k = 0;
    for v in DensityVariant::ALL {
        for c in DensityConvention::ALL {
            out[k] = (v, c);
            k += 1;
        }
    }
    out
}

const BOUND_NAMES: [&str; 7] = [
    "speed",
    "displacement",
    "confinement",
    "jacobian_norm",
    "phase_lower",
    "phase_upper",
    "continuity",
];

#[derive(Clone, Copy, Debug)]
struct BoundAcc {
    measured: f64,
    bound: f64,
    margin: f64,
    pass: bool,
}

impl BoundAcc {
    const EMPTY: BoundAcc = BoundAcc { measured: 0.0, bound: 0.0, margin: f64::INFINITY, pass: true };

    /// `measured <= bound`, up to rounding.
    fn upper(measured: f64, bound: f64) -> Self {
        let margin = bound - measured;
        BoundAcc { measured, bound, margin, pass: margin >= -ROUNDING * (1.0 + bound.abs()) }
    }

    /// `measured >= bound`, up to rounding.
    fn lower(measured: f64, bound: f64) -> Self {
        let margin = measured - bound;
        BoundAcc { measured, bound, margin, pass: margin >= -ROUNDING * (1.0 + bound.abs()) }
    }

    fn merge(&mut self, other: BoundAcc) {
        if other.margin < self.margin {
            let pass = self.pass && other.pass;
            *self = other;
            self.pass = pass;
        } else {
            self.pass &= other.pass;
        }
    }
}

/// Per-seed maxima over the output times.
#[derive(Clone, Debug)]
struct SeedOutcome {
    displacement: f64,
    trajectory: f64,
    jacobian: f64,
    velocity: f64,
    /// Against `ρ0/J`, one per candidate.
    density: [f64; N_CANDIDATES],
    /// Against the configured convention, one per variant.
    density_claim: [f64; 2],
    bounds: [BoundAcc; 7],
}

struct SweepContext<'a> {
    spec: &'a FieldSpec,
    hyp: &'a HypothesisReport,
    cfg: &'a IntegratorConfig,
    times: &'a [f64],
    horizon: f64,
    b_lo: f64,
    b_hi: f64,
    density: DensityConvention,
}

fn seed_outcome(ctx: &SweepContext, x0: Vec2, eps: f64) -> Result<SeedOutcome> {
    let spec = ctx.spec;
    let traj = integrate(x0, spec, eps, ctx.times, ctx.cfg, Mode::Reduced)?;
    let rho_cont = integrate_continuity(x0, spec, eps, ctx.times, ctx.cfg)?;
    let rho0 = spec.rho0.eval(x0).0;
    let u0_sup = ctx.hyp.u0_sup;
    let mut out = SeedOutcome {
        displacement: 0.0,
        trajectory: 0.0,
        jacobian: 0.0,
        velocity: 0.0,
        density: [0.0; N_CANDIDATES],
        density_claim: [0.0; 2],
        bounds: [BoundAcc::EMPTY; 7],
    };
    let cands = candidates();
    let conv = Conventions::default();
    for (s, &rc) in traj.states.iter().zip(&rho_cont) {
        let t = s.t;
        let disp = (s.x - x0).norm();
        let j = jacobian_det(s);
        if j <= 0.0 {
            return Err(Error::CausticCrossed { t, det: j });
        }
        out.displacement = out.displacement.max(disp);
        out.trajectory = out.trajectory.max((s.x - approx_x(spec, x0, t, eps, s.phi)).max_abs());
        let (dx_pred, _) = approx_dx_j(spec, x0, t, eps, s.phi);
        out.jacobian = out.jacobian.max((s.dx - dx_pred).max_abs());
        let u_pred = predict_u(spec, x0, t, eps, Frame::Lagrangian, PhaseConvention::Consistent)?;
        out.velocity = out.velocity.max((s.u - u_pred).max_abs());

        let rho_ref = rho0 / j;
        for (k, &(variant, density)) in cands.iter().enumerate() {
            let c = Conventions { density, ..conv };
            let e = match predict_rho(spec, x0, t, eps, Frame::Lagrangian, variant, &c) {
                Ok(p) => (p - rho_ref).abs(),
                Err(_) => f64::INFINITY,
            };
            out.density[k] = out.density[k].max(e);
        }
        let rho_num = ctx.density.apply(rho0, j);
        for (k, variant) in DensityVariant::ALL.into_iter().enumerate() {
            let c = Conventions { density: ctx.density, ..conv };
            let e = match predict_rho(spec, x0, t, eps, Frame::Lagrangian, variant, &c) {
                Ok(p) => (p - rho_num).abs(),
                Err(_) => f64::INFINITY,
            };
            out.density_claim[k] = out.density_claim[k].max(e);
        }

        if t == 0.0 {
            // every bound holds with equality at the initial state
            continue;
        }
        let checks = [
            BoundAcc::upper(s.u.norm(), 2.0 * u0_sup),
            BoundAcc::upper(disp, 2.0 * t * u0_sup),
            BoundAcc::upper(disp, ctx.hyp.confinement_radius(eps, ctx.horizon)),
            BoundAcc::upper(s.dx.norm(), ctx.hyp.dx_bound(eps, ctx.horizon, t)),
            BoundAcc::lower(s.phi, ctx.b_lo * t),
            BoundAcc::upper(s.phi, ctx.b_hi * t),
            BoundAcc::upper((rc - rho_ref).abs(), CONTINUITY_TOLERANCE),
        ];
        for (acc, c) in out.bounds.iter_mut().zip(checks) {
            acc.merge(c);
        }
    }
    Ok(out)
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Eulerian errors at one ε.
struct EulerianOutcome {
    stats: EulerianStats,
    velocity: [Option<f64>; 2],
    density: [Option<f64>; N_CANDIDATES],
    density_claim: [Option<f64>; 2],
    failures: Vec<String>,
}

fn eulerian_outcome(
    spec: &FieldSpec,
    grid: &crate::fields::DomainSample,
    t: f64,
    eps: f64,
    cfg: &IntegratorConfig,
    tol: f64,
    density: DensityConvention,
) -> Result<EulerianOutcome> {
    let frame = eulerian_fields(spec, grid, t, eps, cfg, DensityConvention::Conservative, tol)?;
    let mut failures: Vec<String> = frame.failures.iter().map(|f| f.reason.clone()).collect();
    let complete = !frame.partial;
    let cands = candidates();
    let rows: Vec<Result<NodeErrors>> = frame
        .points
        .par_iter()
        .map(|p| {
            let mut vel = [0.0; 2];
            for (k, pc) in [PhaseConvention::Consistent, PhaseConvention::PlusCos].into_iter().enumerate() {
                vel[k] = (p.u - predict_u(spec, p.x, t, eps, Frame::Eulerian, pc)?).max_abs();
            }
            let mut dens = [0.0; N_CANDIDATES];
            for (k, &(variant, density)) in cands.iter().enumerate() {
                let c = Conventions { density, phase: PhaseConvention::Consistent };
                dens[k] = match predict_rho(spec, p.x, t, eps, Frame::Eulerian, variant, &c) {
                    Ok(v) => (v - p.rho).abs(),
                    Err(_) => f64::INFINITY,
                };
            }
            let rho_num = density.apply(spec.rho0.eval(p.preimage).0, p.jacobian);
            let mut claim = [0.0; 2];
            for (k, variant) in DensityVariant::ALL.into_iter().enumerate() {
                let c = Conventions { density, phase: PhaseConvention::Consistent };
                claim[k] = match predict_rho(spec, p.x, t, eps, Frame::Eulerian, variant, &c) {
                    Ok(v) => (v - rho_num).abs(),
                    Err(_) => f64::INFINITY,
                };
            }
            Ok((vel, dens, claim))
        })
        .collect();
    let mut vel = [0.0f64; 2];
    let mut dens = [0.0f64; N_CANDIDATES];
    let mut claim = [0.0f64; 2];
    let mut phase_failed = [false; 2];
    for r in rows {
        match r {
            Ok((v, d, c)) => {
                for k in 0..2 {
                    vel[k] = vel[k].max(v[k]);
                    claim[k] = claim[k].max(c[k]);
                }
                for k in 0..N_CANDIDATES {
                    dens[k] = dens[k].max(d[k]);
                }
            }
            Err(e) => {
                failures.push(e.to_string());
                phase_failed = [true; 2];
            }
        }
    }
    let ok = complete && !frame.points.is_empty();
    let stats = EulerianStats {
        time: t,
        nodes: frame.points.len() + frame.failures.len(),
        converged: frame.points.len(),
        max_newton_iters: frame.points.iter().map(|p| p.newton_iters).max().unwrap_or(0),
        max_residual: frame.points.iter().map(|p| p.residual).fold(0.0, f64::max),
        preimage_ratio: frame.points.iter().map(|p| (p.preimage - p.x).norm() / eps).fold(0.0, f64::max),
    };
    let keep = |v: f64, failed: bool| if ok && !failed { finite(v) } else { None };
    Ok(EulerianOutcome {
        stats,
        velocity: [keep(vel[0], phase_failed[0]), keep(vel[1], phase_failed[1])],
        density: dens.map(|v| keep(v, phase_failed[0])),
        density_claim: claim.map(|v| keep(v, phase_failed[0])),
        failures,
    })
}

/// Eulerian evaluation time: explicit, or a fraction of `t_star`, or the
/// horizon when the lifespan bound is infinite.
fn eulerian_time(cfg: &ExperimentConfig, opts: &crate::config::EulerianOptions, t_star: f64) -> f64 {
    opts.time.unwrap_or(if t_star.is_finite() { opts.time_fraction * t_star } else { cfg.horizon })
}

/// Minimum Jacobian over seeds at `fraction · t_star` for the smallest ε.
pub fn run_lifespan(
    spec: &FieldSpec,
    seeds: &[Vec2],
    epsilons: &[f64],
    t_star: f64,
    opts: &LifespanOptions,
    cfg: &IntegratorConfig,
    samples: usize,
) -> Option<LifespanReport> {
    if !t_star.is_finite() {
        return None;
    }
    let horizon = opts.fraction * t_star;
    let times = uniform_times(horizon, samples.max(1));
    let mut entries = Vec::new();
    for &eps in epsilons.iter().rev().take(opts.smallest).collect::<Vec<_>>().into_iter().rev() {
        let mins: Vec<Result<f64>> = seeds
            .par_iter()
            .map(|&x0| integrate(x0, spec, eps, &times, cfg, Mode::Reduced).map(|t| t.diagnostics.min_jacobian))
            .collect();
        let mut min_j = f64::INFINITY;
        let mut failure = None;
        for m in mins {
            match m {
                Ok(j) => min_j = min_j.min(j),
                Err(e) if failure.is_none() => failure = Some(e.to_string()),
                Err(_) => {}
            }
        }
        entries.push(LifespanEntry { epsilon: eps, min_jacobian: finite(min_j), failure });
    }
    let pass = !entries.is_empty()
        && entries.iter().all(|e| e.failure.is_none() && e.min_jacobian.is_some_and(|j| j > opts.min_jacobian));
    Some(LifespanReport { fraction: opts.fraction, horizon, threshold: opts.min_jacobian, entries, pass })
}

/// Detects the first crossing of characteristics and compares it with the
/// first-order prediction `1 / (|u0| |∇log b|)`.
pub fn run_caustic(spec: &FieldSpec, opts: &CausticOptions, cfg: &IntegratorConfig) -> CausticSummary {
    let seeds = opts.seeds.points();
    let scan = detect_caustic(&seeds, spec, opts.epsilon, cfg, opts.t_max);
    let predicted = seeds.iter().map(|&x| predicted_caustic_time(spec, x)).fold(f64::INFINITY, f64::min);
    let relative_error = scan.t_eps.filter(|_| predicted.is_finite()).map(|t| (t - predicted).abs() / predicted);
    let pass = match (scan.t_eps, predicted.is_finite()) {
        (Some(_), true) => relative_error.is_some_and(|r| r <= opts.tolerance),
        // no crossing predicted within reach and none found
        (None, false) => true,
        (None, true) => predicted > opts.t_max,
        (Some(_), false) => false,
    };
    CausticSummary {
        epsilon: opts.epsilon,
        t_max: opts.t_max,
        predicted,
        relative_error,
        tolerance: opts.tolerance,
        scan,
        pass,
    }
}

/// A random trigonometric polynomial `c0 + Σ_k a_k cos(kωs) + b_k sin(kωs)`.
#[derive(Clone, Debug)]
pub struct TrigPoly {
    pub c0: f64,
    pub omega: f64,
    pub coeffs: Vec<(f64, f64)>,
}

impl TrigPoly {
    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().enumerate().fold(self.c0, |acc, (k, (a, b))| {
            let (sn, cs) = ((k + 1) as f64 * self.omega * s).sin_cos();
            acc + a * cs + b * sn
        })
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.coeffs.iter().enumerate().fold(0.0, |acc, (k, (a, b))| {
            let w = (k + 1) as f64 * self.omega;
            let (sn, cs) = (w * s).sin_cos();
            acc - a * w * sn + b * w * cs
        })
    }

    fn amplitude(&self) -> f64 {
        self.coeffs.iter().map(|(a, b)| a.abs() + b.abs()).sum()
    }
}

/// Random `(F, β)` with `β` confined to `beta_range`.
pub fn random_oscillands(rng: &mut ChaCha8Rng, horizon: f64, beta_range: [f64; 2]) -> (TrigPoly, TrigPoly) {
    let omega = 2.0 * PI / horizon;
    let harmonics = 3;
    let f = TrigPoly {
        c0: rng.gen_range(-1.0..1.0),
        omega,
        coeffs: (1..=harmonics)
            .map(|k| (rng.gen_range(-1.0..1.0) / k as f64, rng.gen_range(-1.0..1.0) / k as f64))
            .collect(),
    };
    let mut beta = TrigPoly {
        c0: 0.5 * (beta_range[0] + beta_range[1]),
        omega,
        coeffs: (1..=harmonics)
            .map(|k| (rng.gen_range(-1.0..1.0) / k as f64, rng.gen_range(-1.0..1.0) / k as f64))
            .collect(),
    };
    let amp = beta.amplitude();
    let half = 0.5 * (beta_range[1] - beta_range[0]);
    if amp > 0.0 {
        for c in &mut beta.coeffs {
            c.0 *= half / amp;
            c.1 *= half / amp;
        }
    }
    (f, beta)
}

/// Builds the oscillatory sample of `(F, β)` on a grid resolving ε.
pub fn oscilland_sample(f: &TrigPoly, beta: &TrigPoly, horizon: f64, eps: f64, beta_max: f64) -> Result<OscillandSample> {
    let times = resolving_grid(horizon, eps, beta_max, 2 * MIN_POINTS_PER_PERIOD);
    let fv: Vec<f64> = times.iter().map(|&s| f.eval(s)).collect();
    let bv: Vec<f64> = times.iter().map(|&s| beta.eval(s)).collect();
    let dsup = times
        .iter()
        .map(|&s| {
            let (b, db) = (beta.eval(s), beta.derivative(s));
            ((f.derivative(s) * b - f.eval(s) * db) / (b * b)).abs()
        })
        .fold(0.0, f64::max);
    let b_min = bv.iter().copied().fold(f64::INFINITY, f64::min);
    OscillandSample::new(times, fv, bv, b_min, Some(dsup))
}

/// Checks the oscillatory-integral bounds on random samples.
pub fn run_nsp(opts: &NspOptions) -> NspSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let draws: Vec<(TrigPoly, TrigPoly)> =
        (0..opts.samples).map(|_| random_oscillands(&mut rng, opts.horizon, opts.beta_range)).collect();
    let cases: Vec<(usize, f64)> =
        (0..opts.samples).flat_map(|i| opts.epsilons.iter().map(move |&e| (i, e))).collect();
    let results: Vec<Result<f64>> = cases
        .par_iter()
        .map(|&(i, eps)| {
            let (f, beta) = &draws[i];
            let sample = oscilland_sample(f, beta, opts.horizon, eps, opts.beta_range[1])?;
            Ok(verify_nsp(&sample, eps)?.min_margin())
        })
        .collect();
    let mut min_margin = f64::INFINITY;
    let mut violations = 0;
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(m) => {
                min_margin = min_margin.min(m);
                if m < -NSP_TOLERANCE {
                    violations += 1;
                }
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    NspSummary {
        samples: opts.samples,
        epsilons: opts.epsilons.clone(),
        cases: cases.len(),
        min_margin,
        violations,
        pass: violations == 0 && failures.is_empty() && !cases.is_empty(),
        failures,
    }
}

/// Index of the candidate with the smallest mean log error over the sweep.
fn winner(errs: &[Vec<Option<f64>>]) -> Option<usize> {
    let score = |e: &Vec<Option<f64>>| -> Option<f64> {
        if e.is_empty() || e.iter().any(|v| v.is_none()) {
            return None;
        }
        Some(e.iter().map(|v| v.unwrap().max(f64::MIN_POSITIVE).ln()).sum::<f64>() / e.len() as f64)
    };
    errs.iter()
        .enumerate()
        .filter_map(|(i, e)| score(e).map(|s| (i, s)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

fn max_opt(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, f64::max)
}

/// Runs the full sweep described by `cfg`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let spec = &cfg.fields;
    let hyp = check_hypotheses(spec, &cfg.domain)?;
    if cfg.horizon >= hyp.t_star && !cfg.allow_beyond_lifespan {
        return Err(Error::Config(format!(
            "horizon {} is not below the lifespan bound t_star = {}",
            cfg.horizon, hyp.t_star
        )));
    }
    let times = cfg.times();
    let seeds = cfg.seeds.points();
    let icfg = cfg.integrator();
    let floor = icfg.abs_tol;
    let ctx = SweepContext {
        spec,
        hyp: &hyp,
        cfg: &icfg,
        times: &times,
        horizon: cfg.horizon,
        b_lo: spec.b.lower_bound(),
        b_hi: spec.b.upper_bound(),
        density: cfg.density.convention,
    };

    let n_eps = cfg.epsilons.len();
    let mut claim_errors: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(n_eps); Claim::ALL.len()];
    let mut lag_density: Vec<Vec<Option<f64>>> = vec![Vec::new(); N_CANDIDATES];
    let mut eul_density: Vec<Vec<Option<f64>>> = vec![Vec::new(); N_CANDIDATES];
    let mut lag_claim: Vec<Vec<Option<f64>>> = vec![Vec::new(); 2];
    let mut eul_claim: Vec<Vec<Option<f64>>> = vec![Vec::new(); 2];
    let mut phase_errors: Vec<Vec<Option<f64>>> = vec![Vec::new(); 2];
    let mut per_epsilon = Vec::with_capacity(n_eps);

    for &eps in &cfg.epsilons {
        let outcomes: Vec<Result<SeedOutcome>> = seeds.par_iter().map(|&x0| seed_outcome(&ctx, x0, eps)).collect();
        let mut failures = Vec::new();
        let mut ok: Vec<SeedOutcome> = Vec::with_capacity(outcomes.len());
        let mut failed = 0;
        for (o, x0) in outcomes.into_iter().zip(&seeds) {
            match o {
                Ok(o) => ok.push(o),
                Err(e) => {
                    if failed == 0 {
                        failures.push(format!("seed ({}, {}): {e}", x0.x, x0.y));
                    }
                    failed += 1;
                }
            }
        }
        if failed > 1 {
            failures.push(format!("{failed} of {} seeds failed", seeds.len()));
        }
        let complete = failed == 0 && !ok.is_empty();
        let agg = |f: &dyn Fn(&SeedOutcome) -> f64| if complete { finite(max_opt(ok.iter().map(f))) } else { None };

        let displacement = agg(&|o| o.displacement);
        claim_errors[0].push(displacement);
        claim_errors[1].push(agg(&|o| o.trajectory));
        claim_errors[2].push(agg(&|o| o.jacobian));
        claim_errors[3].push(agg(&|o| o.velocity));
        for k in 0..N_CANDIDATES {
            lag_density[k].push(agg(&|o| o.density[k]));
        }
        for k in 0..2 {
            lag_claim[k].push(agg(&|o| o.density_claim[k]));
        }

        let mut bounds = [BoundAcc::EMPTY; 7];
        for o in &ok {
            for (acc, b) in bounds.iter_mut().zip(o.bounds) {
                acc.merge(b);
            }
        }
        let bounds: Vec<BoundCheck> = if ok.is_empty() {
            Vec::new()
        } else {
            BOUND_NAMES
                .iter()
                .zip(bounds)
                .map(|(name, b)| BoundCheck {
                    name: name.to_string(),
                    measured: b.measured,
                    bound: b.bound,
                    margin: b.margin,
                    pass: b.pass,
                })
                .collect()
        };

        let eulerian = match &cfg.eulerian {
            Some(opts) => {
                let t = eulerian_time(cfg, opts, hyp.t_star);
                match eulerian_outcome(spec, &opts.grid, t, eps, &icfg, opts.newton_tol, cfg.density.convention) {
                    Ok(e) => {
                        if !e.failures.is_empty() {
                            failures.push(format!(
                                "eulerian: {} of {} nodes failed, first: {}",
                                e.failures.len(),
                                e.stats.nodes,
                                e.failures[0]
                            ));
                        }
                        Some(e)
                    }
                    Err(e) => {
                        failures.push(format!("eulerian: {e}"));
                        None
                    }
                }
            }
            None => None,
        };
        claim_errors[5].push(eulerian.as_ref().and_then(|e| e.velocity[0]));
        for k in 0..2 {
            phase_errors[k].push(eulerian.as_ref().and_then(|e| e.velocity[k]));
            eul_claim[k].push(eulerian.as_ref().and_then(|e| e.density_claim[k]));
        }
        for k in 0..N_CANDIDATES {
            eul_density[k].push(eulerian.as_ref().and_then(|e| e.density[k]));
        }

        let pass = failures.is_empty() && !bounds.is_empty() && bounds.iter().all(|b| b.pass);
        per_epsilon.push(EpsilonRecord {
            epsilon: eps,
            seeds: seeds.len(),
            confinement_ratio: displacement.map(|d| d / eps),
            continuity_max_diff: if complete { Some(bounds[6].measured) } else { None },
            bounds,
            eulerian: eulerian.map(|e| e.stats),
            failures,
            pass,
        });
    }

    // density adjudication against ρ0/J
    let cands = candidates();
    let lag_winner = winner(&lag_density);
    let eul_winner = winner(&eul_density);
    let forced = cfg.density.variant;
    let variant_index = |v: DensityVariant| DensityVariant::ALL.iter().position(|&w| w == v).unwrap();
    let lag_variant = forced.or(lag_winner.map(|i| cands[i].0));
    let eul_variant = forced.or(eul_winner.map(|i| cands[i].0)).or(lag_variant);
    claim_errors[4] = match lag_variant {
        Some(v) => lag_claim[variant_index(v)].clone(),
        None => vec![None; n_eps],
    };
    claim_errors[6] = match eul_variant {
        Some(v) => eul_claim[variant_index(v)].clone(),
        None => vec![None; n_eps],
    };
    if cfg.eulerian.is_none() {
        claim_errors[5] = vec![None; n_eps];
        claim_errors[6] = vec![None; n_eps];
    }

    let eps = &cfg.epsilons;
    let density = DensityAdjudication {
        reference: "rho0/J, cross-checked by direct integration of the continuity equation".into(),
        candidates: cands
            .iter()
            .enumerate()
            .map(|(k, &(variant, convention))| DensityCandidate {
                variant,
                convention,
                lagrangian_fit: fit_order_with_floor(&lag_density[k], eps, floor),
                lagrangian_errors: lag_density[k].clone(),
                eulerian_fit: fit_order_with_floor(&eul_density[k], eps, floor),
                eulerian_errors: eul_density[k].clone(),
            })
            .collect(),
        lagrangian_winner: lag_winner,
        eulerian_winner: eul_winner,
        selected: lag_variant,
        forced: forced.is_some(),
    };
    let phase = if cfg.eulerian.is_some() {
        [PhaseConvention::Consistent, PhaseConvention::PlusCos]
            .into_iter()
            .zip(&phase_errors)
            .map(|(convention, errors)| PhaseCandidate {
                convention,
                fit: fit_order_with_floor(errors, eps, floor),
                errors: errors.clone(),
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut rows = Vec::with_capacity(n_eps * Claim::ALL.len());
    for (i, &e) in eps.iter().enumerate() {
        for (c, claim) in Claim::ALL.into_iter().enumerate() {
            let error = claim_errors[c][i];
            rows.push(ErrorRow { epsilon: e, claim, error, scaled: error.map(|v| v / e.powf(claim.expected_order())) });
        }
    }
    let mut claims: Vec<ClaimSummary> = Claim::ALL
        .into_iter()
        .enumerate()
        .map(|(c, claim)| {
            // confinement is a size, not a remainder: no noise floor applies
            let fl = if claim == Claim::Confinement { 0.0 } else { floor };
            let fit = fit_order_with_floor(&claim_errors[c], eps, fl);
            let status = status_of(&fit, claim.window());
            ClaimSummary { claim, expected_order: claim.expected_order(), window: claim.window(), fit, status }
        })
        .collect();
    if cfg.eulerian.is_none() {
        for c in claims.iter_mut().filter(|c| matches!(c.claim, Claim::EulerianVelocity | Claim::EulerianDensity)) {
            c.status = Status::NoData;
            c.fit.flags.push("eulerian checks disabled".into());
        }
    }

    let mut flags = Vec::new();
    if n_eps == 0 || seeds.is_empty() {
        flags.push(FLAG_NO_DATA.to_string());
    }
    let ratios: Vec<f64> = per_epsilon.iter().filter_map(|e| e.confinement_ratio).filter(|r| *r > 0.0).collect();
    let spread = if ratios.len() >= 2 {
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        Some(hi / lo)
    } else {
        None
    };
    if let Some(s) = spread {
        if s >= CONFINEMENT_SPREAD {
            flags.push(format!("confinement ratio spread {s:.3} >= {CONFINEMENT_SPREAD}"));
        }
    }

    let lifespan = cfg.lifespan.as_ref().and_then(|opts| {
        run_lifespan(spec, &seeds, eps, hyp.t_star, opts, &icfg, cfg.samples)
    });
    if cfg.lifespan.is_some() && lifespan.is_none() {
        flags.push("lifespan check skipped: t_star is infinite".into());
    }
    let caustic = cfg.caustic.as_ref().map(|opts| run_caustic(spec, opts, &icfg));
    let nsp = cfg.nsp.as_ref().map(run_nsp);

    let mut empirical_eps_t = None;
    for rec in per_epsilon.iter().rev() {
        if !rec.pass {
            break;
        }
        empirical_eps_t = Some(rec.epsilon);
    }

    let pass = n_eps > 0
        && claims.iter().all(|c| c.status.ok() || c.status == Status::NoData && cfg.eulerian.is_none())
        && per_epsilon.iter().all(|e| e.pass)
        && spread.is_none_or(|s| s < CONFINEMENT_SPREAD)
        && lifespan.as_ref().is_none_or(|l| l.pass)
        && caustic.as_ref().is_none_or(|c| c.pass)
        && nsp.as_ref().is_none_or(|n| n.pass);

    Ok(SweepReport {
        name: cfg.name.clone(),
        fields: spec.clone(),
        hypotheses: hyp.clone(),
        horizon: cfg.horizon,
        output_times: times.len(),
        seeds: seeds.len(),
        seed_resolution: cfg.seeds.resolution(),
        eulerian_resolution: cfg.eulerian.as_ref().map(|e| e.grid.resolution),
        epsilons: cfg.epsilons.clone(),
        integrator: icfg.clone(),
        density_options: cfg.density,
        claims,
        rows,
        per_epsilon,
        density,
        phase,
        lifespan,
        caustic,
        nsp,
        confinement_spread: spread,
        empirical_eps_t,
        flags,
        pass,
    })
}

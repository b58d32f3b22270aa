//! Sweep report types and their CSV / JSON / markdown renderings.
//!
//! Everything written here is a pure function of the report, with fixed
//! float formatting and ordering, so identical inputs give identical bytes.
//! Wall-clock data lives in a separate `runtime.json`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::asymptotics::{DensityVariant, PhaseConvention};
use crate::characteristics::{CausticReport, DensityConvention, IntegratorConfig};
use crate::config::DensityOptions;
use crate::error::{Error, Result};
use crate::fields::{FieldSpec, HypothesisReport};

/// Serializes non-finite floats as strings (`"inf"`, `"-inf"`, `"nan"`) so
/// that reports stay valid JSON.
pub mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => s.parse::<f64>().map_err(serde::de::Error::custom),
        }
    }
}

/// The asymptotic statements checked by a sweep, in report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    /// `|X - x| = O(ε)`.
    Confinement,
    /// `X - approx_x(φ) = O(ε²)`.
    TrajectoryExpansion,
    /// `DX - DX_pred(φ) = O(ε)`.
    JacobianExpansion,
    /// `u(t, X) - u_pred(φ̃) = O(ε)`.
    LagrangianVelocity,
    /// `ρ(t, X) - ρ_pred(φ̃) = O(ε)`.
    LagrangianDensity,
    /// `u(t, x) - u_pred(θ) = O(ε)`.
    EulerianVelocity,
    /// `ρ(t, x) - ρ_pred(θ) = O(ε)`.
    EulerianDensity,
}

impl Claim {
    pub const ALL: [Claim; 7] = [
        Claim::Confinement,
        Claim::TrajectoryExpansion,
        Claim::JacobianExpansion,
        Claim::LagrangianVelocity,
        Claim::LagrangianDensity,
        Claim::EulerianVelocity,
        Claim::EulerianDensity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Claim::Confinement => "confinement",
            Claim::TrajectoryExpansion => "trajectory_expansion",
            Claim::JacobianExpansion => "jacobian_expansion",
            Claim::LagrangianVelocity => "lagrangian_velocity",
            Claim::LagrangianDensity => "lagrangian_density",
            Claim::EulerianVelocity => "eulerian_velocity",
            Claim::EulerianDensity => "eulerian_density",
        }
    }

    pub fn expected_order(self) -> f64 {
        match self {
            Claim::TrajectoryExpansion => 2.0,
            _ => 1.0,
        }
    }

    /// Accepted range for the fitted log-log slope.
    pub fn window(self) -> [f64; 2] {
        match self {
            Claim::TrajectoryExpansion => [1.7, 2.3],
            _ => [0.8, 1.2],
        }
    }
}

/// Least-squares fit of `log error = slope · log ε + intercept`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// `exp(intercept)`, the fitted remainder constant.
    pub constant: Option<f64>,
    /// Root-mean-square residual in log space.
    pub residual: Option<f64>,
    pub points_used: usize,
    pub flags: Vec<String>,
}

pub const FLAG_NOISE_FLOOR: &str = "below noise floor";
pub const FLAG_EXACT: &str = "exact regime";
pub const FLAG_TOO_FEW: &str = "fewer than 3 points";
pub const FLAG_NO_DATA: &str = "no data";

impl OrderFit {
    pub fn is_exact(&self) -> bool {
        self.flags.iter().any(|f| f == FLAG_EXACT)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    ExactRegime,
    NoData,
}

impl Status {
    pub fn ok(self) -> bool {
        matches!(self, Status::Pass | Status::ExactRegime)
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::ExactRegime => "exact regime",
            Status::NoData => "no data",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimSummary {
    pub claim: Claim,
    pub expected_order: f64,
    pub window: [f64; 2],
    pub fit: OrderFit,
    pub status: Status,
}

/// One entry of the per-ε error table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub epsilon: f64,
    pub claim: Claim,
    /// L∞ error over seeds (or grid nodes) and output times; absent when
    /// the claim could not be evaluated at this ε.
    pub error: Option<f64>,
    /// `error / ε^order`.
    pub scaled: Option<f64>,
}

/// A priori bound `measured <= bound`, aggregated by the smallest margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerianStats {
    pub time: f64,
    pub nodes: usize,
    pub converged: usize,
    pub max_newton_iters: usize,
    pub max_residual: f64,
    /// `max |X⁻¹(t, x) - x| / ε` over the grid.
    pub preimage_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRecord {
    pub epsilon: f64,
    pub seeds: usize,
    pub bounds: Vec<BoundCheck>,
    /// `max |X - x| / ε` over seeds and times.
    pub confinement_ratio: Option<f64>,
    /// `max |ρ_continuity - ρ0/J|` over seeds and times.
    pub continuity_max_diff: Option<f64>,
    pub eulerian: Option<EulerianStats>,
    pub failures: Vec<String>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityCandidate {
    pub variant: DensityVariant,
    pub convention: DensityConvention,
    pub lagrangian_errors: Vec<Option<f64>>,
    pub lagrangian_fit: OrderFit,
    pub eulerian_errors: Vec<Option<f64>>,
    pub eulerian_fit: OrderFit,
}

impl DensityCandidate {
    pub fn label(&self) -> String {
        format!("{} / {}", self.variant.name(), self.convention.name())
    }
}

/// Which first-order density formula matches the continuity equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityAdjudication {
    /// The reference is `ρ0/J`, itself cross-checked against a direct
    /// integration of the continuity equation.
    pub reference: String,
    pub candidates: Vec<DensityCandidate>,
    /// Index into `candidates`, chosen by smallest mean log error.
    pub lagrangian_winner: Option<usize>,
    pub eulerian_winner: Option<usize>,
    /// Variant used by the density claims (forced or adjudicated).
    pub selected: Option<DensityVariant>,
    pub forced: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCandidate {
    pub convention: PhaseConvention,
    pub errors: Vec<Option<f64>>,
    pub fit: OrderFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifespanEntry {
    pub epsilon: f64,
    pub min_jacobian: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifespanReport {
    pub fraction: f64,
    pub horizon: f64,
    pub threshold: f64,
    pub entries: Vec<LifespanEntry>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausticSummary {
    pub epsilon: f64,
    pub t_max: f64,
    /// `min over seeds of 1 / (|u0| |∇log b|)`.
    #[serde(with = "inf_as_string")]
    pub predicted: f64,
    pub relative_error: Option<f64>,
    pub tolerance: f64,
    pub scan: CausticReport,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NspSummary {
    pub samples: usize,
    pub epsilons: Vec<f64>,
    pub cases: usize,
    pub min_margin: f64,
    pub violations: usize,
    pub failures: Vec<String>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub name: String,
    pub fields: FieldSpec,
    pub hypotheses: HypothesisReport,
    pub horizon: f64,
    pub output_times: usize,
    pub seeds: usize,
    pub seed_resolution: Option<usize>,
    pub eulerian_resolution: Option<usize>,
    pub epsilons: Vec<f64>,
    pub integrator: IntegratorConfig,
    pub density_options: DensityOptions,
    pub claims: Vec<ClaimSummary>,
    pub rows: Vec<ErrorRow>,
    pub per_epsilon: Vec<EpsilonRecord>,
    pub density: DensityAdjudication,
    pub phase: Vec<PhaseCandidate>,
    pub lifespan: Option<LifespanReport>,
    pub caustic: Option<CausticSummary>,
    pub nsp: Option<NspSummary>,
    /// `max/min` of `max |X - x| / ε` across the sweep.
    pub confinement_spread: Option<f64>,
    /// Largest ε such that it and every smaller swept ε pass all checks.
    pub empirical_eps_t: Option<f64>,
    pub flags: Vec<String>,
    pub pass: bool,
}

/// Wall-clock data kept out of the deterministic report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeInfo {
    pub elapsed_seconds: f64,
    pub workers: usize,
    pub version: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Markdown,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Csv, Format::Json, Format::Markdown];
}

pub const ERRORS_CSV: &str = "errors.csv";
pub const BOUNDS_CSV: &str = "bounds.csv";
pub const DENSITY_CSV: &str = "density.csv";
pub const REPORT_JSON: &str = "report.json";
pub const SUMMARY_MD: &str = "summary.md";
pub const RUNTIME_JSON: &str = "runtime.json";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.9e}"))
}

fn opt_short(v: Option<f64>) -> String {
    v.map_or_else(|| "—".to_string(), |x| format!("{x:.3e}"))
}

/// Error table: one row per (ε, claim).
pub fn errors_csv(r: &SweepReport) -> String {
    let mut s = String::from("epsilon,claim,error,scaled,expected_order\n");
    for row in &r.rows {
        let _ = writeln!(
            s,
            "{:.9e},{},{},{},{}",
            row.epsilon,
            row.claim.name(),
            opt(row.error),
            opt(row.scaled),
            row.claim.expected_order()
        );
    }
    s
}

pub fn bounds_csv(r: &SweepReport) -> String {
    let mut s = String::from("epsilon,bound,measured,limit,margin,pass\n");
    for e in &r.per_epsilon {
        for b in &e.bounds {
            let _ = writeln!(
                s,
                "{:.9e},{},{:.9e},{:.9e},{:.9e},{}",
                e.epsilon, b.name, b.measured, b.bound, b.margin, b.pass
            );
        }
    }
    s
}

pub fn density_csv(r: &SweepReport) -> String {
    let mut s = String::from("epsilon,frame,variant,convention,error\n");
    for c in &r.density.candidates {
        for (frame, errs) in [("lagrangian", &c.lagrangian_errors), ("eulerian", &c.eulerian_errors)] {
            for (eps, e) in r.epsilons.iter().zip(errs) {
                let _ = writeln!(s, "{eps:.9e},{frame},{},{},{}", c.variant.name(), c.convention.name(), opt(*e));
            }
        }
    }
    s
}

pub fn report_json(r: &SweepReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(r).map_err(|e| Error::Config(format!("serializing report: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn fit_cell(f: &OrderFit) -> String {
    match f.slope {
        Some(s) => format!("{s:.3}"),
        None if f.is_exact() => FLAG_EXACT.to_string(),
        None => "—".to_string(),
    }
}

/// Human-readable summary.
pub fn summary_markdown(r: &SweepReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Sweep `{}`\n", r.name);
    let _ = writeln!(s, "Overall: **{}**\n", if r.pass { "PASS" } else { "FAIL" });
    if !r.flags.is_empty() {
        let _ = writeln!(s, "Flags: {}\n", r.flags.join(", "));
    }
    let h = &r.hypotheses;
    let _ = writeln!(
        s,
        "Fields: b in [{:.4}, {:.4}], |∇b| ≤ {:.4}, |u0| ≤ {:.4}, |∇u0| ≤ {:.4} on a {}² grid; t_star = {}.\n",
        h.b_min,
        h.b_sup,
        h.grad_b_sup,
        h.u0_sup,
        h.grad_u0_sup,
        h.resolution,
        if h.t_star.is_finite() { format!("{:.4}", h.t_star) } else { "inf".into() }
    );
    let _ = writeln!(
        s,
        "Horizon T = {}, {} output times, {} seeds{}, ε = {:?}.\n",
        r.horizon,
        r.output_times,
        r.seeds,
        r.seed_resolution.map_or_else(String::new, |n| format!(" ({n}×{n} grid)")),
        r.epsilons
    );

    let _ = writeln!(s, "## Convergence orders\n");
    let _ = writeln!(s, "| claim | expected | window | slope | C | fit residual | points | status |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
    for c in &r.claims {
        let _ = writeln!(
            s,
            "| {} | {} | [{}, {}] | {} | {} | {} | {} | {} |",
            c.claim.name(),
            c.expected_order,
            c.window[0],
            c.window[1],
            fit_cell(&c.fit),
            opt_short(c.fit.constant),
            opt_short(c.fit.residual),
            c.fit.points_used,
            c.status.label()
        );
    }

    if !r.rows.is_empty() {
        let _ = writeln!(s, "\n## Errors (L∞)\n");
        let _ = write!(s, "| ε |");
        for c in Claim::ALL {
            let _ = write!(s, " {} |", c.name());
        }
        let _ = writeln!(s, "\n|---|{}", "---|".repeat(Claim::ALL.len()));
        for (i, eps) in r.epsilons.iter().enumerate() {
            let _ = write!(s, "| {eps} |");
            for row in r.rows.iter().skip(i * Claim::ALL.len()).take(Claim::ALL.len()) {
                let _ = write!(s, " {} |", opt_short(row.error));
            }
            let _ = writeln!(s);
        }
    }

    let _ = writeln!(s, "\n## A priori bounds\n");
    let _ = writeln!(s, "| ε | bound | measured | limit | margin | status |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for e in &r.per_epsilon {
        for b in &e.bounds {
            let _ = writeln!(
                s,
                "| {} | {} | {:.4e} | {:.4e} | {:.4e} | {} |",
                e.epsilon,
                b.name,
                b.measured,
                b.bound,
                b.margin,
                if b.pass { "PASS" } else { "FAIL" }
            );
        }
    }
    let _ = writeln!(s, "\n| ε | max\\|X−x\\|/ε | continuity vs ρ0/J | Eulerian nodes | max preimage shift/ε | failures |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for e in &r.per_epsilon {
        let eul = e.eulerian.as_ref().map_or_else(
            || ("—".to_string(), "—".to_string()),
            |x| (format!("{}/{}", x.converged, x.nodes), format!("{:.4}", x.preimage_ratio)),
        );
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} |",
            e.epsilon,
            e.confinement_ratio.map_or_else(|| "—".into(), |v| format!("{v:.4}")),
            opt_short(e.continuity_max_diff),
            eul.0,
            eul.1,
            if e.failures.is_empty() { "none".to_string() } else { e.failures.join("; ") }
        );
    }

    let d = &r.density;
    let _ = writeln!(s, "\n## Density adjudication\n");
    let _ = writeln!(s, "Reference: {}.\n", d.reference);
    let _ = writeln!(s, "| variant | convention | Lagrangian slope | Lagrangian error at smallest ε | Eulerian slope | Eulerian error at smallest ε |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for c in &d.candidates {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} |",
            c.variant.name(),
            c.convention.name(),
            fit_cell(&c.lagrangian_fit),
            opt_short(c.lagrangian_errors.last().copied().flatten()),
            fit_cell(&c.eulerian_fit),
            opt_short(c.eulerian_errors.last().copied().flatten())
        );
    }
    let name = |i: Option<usize>| i.map_or_else(|| "none".to_string(), |i| d.candidates[i].label());
    let _ = writeln!(s, "\nLagrangian winner: **{}**. Eulerian winner: **{}**.", name(d.lagrangian_winner), name(d.eulerian_winner));
    if let Some(v) = d.selected {
        let _ = writeln!(s, "Density claims use `{}`{}.", v.name(), if d.forced { " (forced by configuration)" } else { "" });
    }

    if !r.phase.is_empty() {
        let _ = writeln!(s, "\n## Eulerian phase convention\n");
        let _ = writeln!(s, "| convention | slope | error at smallest ε |");
        let _ = writeln!(s, "|---|---|---|");
        for p in &r.phase {
            let name = match p.convention {
                PhaseConvention::Consistent => "consistent",
                PhaseConvention::PlusCos => "plus_cos",
            };
            let _ = writeln!(s, "| {} | {} | {} |", name, fit_cell(&p.fit), opt_short(p.errors.last().copied().flatten()));
        }
    }

    if let Some(l) = &r.lifespan {
        let _ = writeln!(s, "\n## Lifespan\n");
        let _ = writeln!(s, "T = {:.4} ({} · t_star), required min J > {}.\n", l.horizon, l.fraction, l.threshold);
        for e in &l.entries {
            let _ = writeln!(
                s,
                "- ε = {}: min J = {}{}",
                e.epsilon,
                e.min_jacobian.map_or_else(|| "—".into(), |j| format!("{j:.4}")),
                e.failure.as_ref().map_or_else(String::new, |f| format!(" ({f})"))
            );
        }
        let _ = writeln!(s, "\nStatus: **{}**", if l.pass { "PASS" } else { "FAIL" });
    }

    if let Some(c) = &r.caustic {
        let _ = writeln!(s, "\n## Caustic\n");
        let _ = writeln!(
            s,
            "ε = {}, {} seeds: detected t = {}, predicted {:.4}, relative error {} (tolerance {}). Status: **{}**",
            c.epsilon,
            c.scan.seeds_scanned,
            c.scan.t_eps.map_or_else(|| "none".into(), |t| format!("{t:.6}")),
            c.predicted,
            opt_short(c.relative_error),
            c.tolerance,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }

    if let Some(n) = &r.nsp {
        let _ = writeln!(s, "\n## Oscillatory integral bounds\n");
        let _ = writeln!(
            s,
            "{} cases ({} samples × ε {:?}): min margin {:.3e}, {} violations. Status: **{}**",
            n.cases,
            n.samples,
            n.epsilons,
            n.min_margin,
            n.violations,
            if n.pass { "PASS" } else { "FAIL" }
        );
    }

    if let Some(sp) = r.confinement_spread {
        let _ = writeln!(s, "\nConfinement ratio spread across the sweep: {sp:.4}.");
    }
    let _ = writeln!(
        s,
        "\nEmpirical ε_T: {}",
        r.empirical_eps_t.map_or_else(|| "none".to_string(), |e| e.to_string())
    );
    s
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes the requested formats into `dir` and returns the files written.
pub fn emit_report(report: &SweepReport, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for f in formats {
        match f {
            Format::Csv => {
                out.push(write_file(dir, ERRORS_CSV, &errors_csv(report))?);
                out.push(write_file(dir, BOUNDS_CSV, &bounds_csv(report))?);
                out.push(write_file(dir, DENSITY_CSV, &density_csv(report))?);
            }
            Format::Json => out.push(write_file(dir, REPORT_JSON, &report_json(report)?)?),
            Format::Markdown => out.push(write_file(dir, SUMMARY_MD, &summary_markdown(report))?),
        }
    }
    Ok(out)
}

pub fn write_runtime(info: &RuntimeInfo, dir: &Path) -> Result<PathBuf> {
    let s = serde_json::to_string_pretty(info).map_err(|e| Error::Config(e.to_string()))?;
    write_file(dir, RUNTIME_JSON, &s)
}

/// Reads `report.json` back from an output directory.
pub fn load_report(dir: &Path) -> Result<SweepReport> {
    let path = dir.join(REPORT_JSON);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { path, message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inf_roundtrip() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct W(#[serde(with = "inf_as_string")] f64);
        assert_eq!(serde_json::to_string(&W(f64::INFINITY)).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&W(1.5)).unwrap(), "1.5");
        let w: W = serde_json::from_str("\"inf\"").unwrap();
        assert!(w.0.is_infinite());
        let w: W = serde_json::from_str("2.0").unwrap();
        assert_eq!(w.0, 2.0);
    }

    #[test]
    fn claim_table_is_consistent() {
        for c in Claim::ALL {
            let [lo, hi] = c.window();
            assert!(lo < c.expected_order() && c.expected_order() < hi);
        }
        assert_eq!(Claim::ALL.iter().filter(|c| c.expected_order() == 2.0).count(), 1);
    }
}

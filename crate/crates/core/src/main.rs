use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use gyrolab::characteristics::{integrate, rho_along, Mode};
use gyrolab::config::{ExperimentConfig, NspOptions};
use gyrolab::fields::check_hypotheses;
use gyrolab::harness::{run_caustic, run_nsp, run_sweep};
use gyrolab::inversion::eulerian_fields;
use gyrolab::report::{emit_report, load_report, summary_markdown, write_runtime, Format, RuntimeInfo};
use gyrolab::{Error, Result, Vec2};

#[derive(Parser)]
#[command(name = "gyrolab", version, about = "Characteristics and small-ε asymptotics of the magnetically penalized pressureless Burgers system")]
struct Cli {
    /// Worker threads (defaults to all cores; results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate field norms on the working domain and check b > 0.
    CheckFields { config: PathBuf },
    /// Integrate one characteristic and print it as CSV.
    Trace {
        config: PathBuf,
        /// Seed point as `x1,x2`.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        seed: Vec2,
        #[arg(long)]
        eps: f64,
        /// Integrate the full (X, u) system instead of the reduced one.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the ε-sweep and write CSV, JSON and markdown reports.
    Sweep {
        config: PathBuf,
        /// Output directory (overrides the configuration).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect the first crossing of characteristics.
    Caustic { config: PathBuf },
    /// Check the oscillatory-integral bounds on random samples.
    VerifyNsp { config: PathBuf },
    /// Invert the flow map on the Eulerian grid and print the fields as CSV.
    Eulerian {
        config: PathBuf,
        #[arg(long)]
        time: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the summary of a finished sweep.
    Report { dir: PathBuf },
}

fn parse_point(s: &str) -> std::result::Result<Vec2, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected x1,x2 but got {s:?}"));
    }
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok(Vec2::new(p(parts[0])?, p(parts[1])?))
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Error::io(p, e))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::CheckFields { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let h = check_hypotheses(&cfg.fields, &cfg.domain)?;
            println!("{}", serde_json::to_string_pretty(&h).map_err(|e| Error::Config(e.to_string()))?);
            let ok = cfg.allow_beyond_lifespan || cfg.horizon < h.t_star;
            if !ok {
                eprintln!("horizon {} is not below t_star = {}", cfg.horizon, h.t_star);
            }
            Ok(ok)
        }
        Command::Trace { config, seed, eps, full, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let mode = if full { Mode::Full } else { Mode::Reduced };
            let traj = integrate(seed, &cfg.fields, eps, &cfg.times(), &cfg.integrator(), mode)?;
            let path = out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
            traj.write_csv(sink(&out)?).map_err(io_err(&path))?;
            let d = traj.diagnostics;
            eprintln!(
                "steps {}, max speed drift {:.3e}, min J {:.6}",
                d.steps, d.max_speed_drift, d.min_jacobian
            );
            if let Ok(rho) = rho_along(&traj, &cfg.fields, cfg.density.convention) {
                eprintln!("final density {:.9}", rho.last().copied().unwrap_or(f64::NAN));
            }
            Ok(true)
        }
        Command::Sweep { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir());
            let start = Instant::now();
            let report = run_sweep(&cfg)?;
            let files = emit_report(&report, &dir, &Format::ALL)?;
            write_runtime(
                &RuntimeInfo {
                    elapsed_seconds: start.elapsed().as_secs_f64(),
                    workers: rayon::current_num_threads(),
                    version: env!("CARGO_PKG_VERSION").to_string(),
                },
                &dir,
            )?;
            print!("{}", summary_markdown(&report));
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            Ok(report.pass)
        }
        Command::Caustic { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let opts = cfg
                .caustic
                .as_ref()
                .ok_or_else(|| Error::Config("configuration has no [caustic] section".into()))?;
            let summary = run_caustic(&cfg.fields, opts, &cfg.integrator());
            println!("{}", serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))?);
            Ok(summary.pass)
        }
        Command::VerifyNsp { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let opts = cfg.nsp.clone().unwrap_or_else(NspOptions::default);
            let summary = run_nsp(&opts);
            println!("{}", serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))?);
            Ok(summary.pass)
        }
        Command::Eulerian { config, time, eps, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let opts = cfg.eulerian.unwrap_or_default();
            let frame = eulerian_fields(
                &cfg.fields,
                &opts.grid,
                time,
                eps,
                &cfg.integrator(),
                cfg.density.convention,
                opts.newton_tol,
            )?;
            let path = out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
            frame.write_csv(sink(&out)?).map_err(io_err(&path))?;
            for f in &frame.failures {
                eprintln!("node ({}, {}): {}", f.x.x, f.x.y, f.reason);
            }
            Ok(!frame.partial)
        }
        Command::Report { dir } => {
            let report = load_report(&dir)?;
            print!("{}", summary_markdown(&report));
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

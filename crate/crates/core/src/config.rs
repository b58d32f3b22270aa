//! Experiment configuration, read from TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::asymptotics::{DensityVariant, PhaseConvention};
use crate::characteristics::{DensityConvention, IntegratorConfig};
use crate::error::{Error, Result};
use crate::fields::{DomainSample, FieldSpec};
use crate::geom::Vec2;

/// Seeds given explicitly or as a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSet {
    List(Vec<Vec2>),
    Grid(DomainSample),
}

impl SeedSet {
    pub fn points(&self) -> Vec<Vec2> {
        match self {
            SeedSet::List(v) => v.clone(),
            SeedSet::Grid(g) => g.points(),
        }
    }

    /// Grid resolution, recorded so that L∞ norms are reproducible.
    pub fn resolution(&self) -> Option<usize> {
        match self {
            SeedSet::List(_) => None,
            SeedSet::Grid(g) => Some(g.resolution),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SeedSet::List(v) if v.iter().all(|p| p.is_finite()) => Ok(()),
            SeedSet::List(_) => Err(Error::Config("seed list contains non-finite points".into())),
            SeedSet::Grid(g) => g.validate(),
        }
    }
}

/// Which conventions the predictions use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensityOptions {
    /// Relation between ρ and the Jacobian used for numerical densities.
    pub convention: DensityConvention,
    /// Fixed trig variant for the density claims; adjudicated when absent.
    pub variant: Option<DensityVariant>,
    pub phase: PhaseConvention,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EulerianOptions {
    pub grid: DomainSample,
    /// Evaluation time as a fraction of the lifespan lower bound `t_star`.
    pub time_fraction: f64,
    /// Absolute time, overriding `time_fraction`.
    pub time: Option<f64>,
    pub newton_tol: f64,
}

impl Default for EulerianOptions {
    fn default() -> Self {
        EulerianOptions {
            grid: DomainSample {
                rect: crate::fields::Rect::new(Vec2::new(-2.0, -2.0), Vec2::new(2.0, 2.0)),
                resolution: 8,
            },
            time_fraction: 0.5,
            time: None,
            newton_tol: 1e-11,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifespanOptions {
    /// Horizon as a fraction of `t_star`.
    pub fraction: f64,
    /// Run on this many of the smallest ε.
    pub smallest: usize,
    /// Required lower bound on the Jacobian.
    pub min_jacobian: f64,
}

impl Default for LifespanOptions {
    fn default() -> Self {
        LifespanOptions { fraction: 0.9, smallest: 2, min_jacobian: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausticOptions {
    pub seeds: SeedSet,
    pub epsilon: f64,
    pub t_max: f64,
    /// Allowed relative deviation from the predicted crossing time.
    #[serde(default = "default_caustic_tolerance")]
    pub tolerance: f64,
}

fn default_caustic_tolerance() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NspOptions {
    pub samples: usize,
    pub epsilons: Vec<f64>,
    pub rng_seed: u64,
    pub horizon: f64,
    pub beta_range: [f64; 2],
}

impl Default for NspOptions {
    fn default() -> Self {
        NspOptions {
            samples: 100,
            epsilons: vec![1e-1, 1e-2, 1e-3],
            rng_seed: 20240601,
            horizon: 1.0,
            beta_range: [1.5, 2.5],
        }
    }
}

fn default_samples() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub fields: FieldSpec,
    /// Working rectangle: hypothesis norms are estimated on it and
    /// trajectories must stay inside it.
    pub domain: DomainSample,
    pub seeds: SeedSet,
    /// Strictly decreasing.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    /// Final time `T`.
    pub horizon: f64,
    /// Number of uniform output times in `(0, T]`, unless `output_times` is set.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub output_times: Option<Vec<f64>>,
    /// Permit `T >= t_star` (caustic experiments).
    #[serde(default)]
    pub allow_beyond_lifespan: bool,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub density: DensityOptions,
    #[serde(default)]
    pub eulerian: Option<EulerianOptions>,
    #[serde(default)]
    pub lifespan: Option<LifespanOptions>,
    #[serde(default)]
    pub caustic: Option<CausticOptions>,
    #[serde(default)]
    pub nsp: Option<NspOptions>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Structural validation; `t_star`-dependent checks happen in the sweep.
    pub fn validate(&self) -> Result<()> {
        self.fields.validate()?;
        self.domain.validate()?;
        self.seeds.validate()?;
        self.integrator.validate()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::Config("epsilons must be positive".into()));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("epsilons must be strictly decreasing".into()));
        }
        if let Some(times) = &self.output_times {
            if times.iter().any(|&t| t > self.horizon) {
                return Err(Error::Config("output times beyond the horizon".into()));
            }
        } else if self.samples == 0 {
            return Err(Error::Config("samples must be positive".into()));
        }
        if let Some(e) = &self.eulerian {
            e.grid.validate()?;
            if !(e.newton_tol > 0.0 && e.time_fraction > 0.0) {
                return Err(Error::Config("eulerian newton_tol and time_fraction must be positive".into()));
            }
        }
        if let Some(c) = &self.caustic {
            c.seeds.validate()?;
            if !(c.epsilon > 0.0 && c.t_max > 0.0) {
                return Err(Error::Config("caustic epsilon and t_max must be positive".into()));
            }
        }
        if let Some(n) = &self.nsp {
            if n.epsilons.iter().any(|e| !(*e > 0.0)) || !(n.horizon > 0.0) || !(n.beta_range[0] > 0.0 && n.beta_range[0] < n.beta_range[1]) {
                return Err(Error::Config("nsp options need positive epsilons, horizon and 0 < beta_min < beta_max".into()));
            }
        }
        Ok(())
    }

    /// Output times in `(0, T]`.
    pub fn times(&self) -> Vec<f64> {
        match &self.output_times {
            Some(t) => t.clone(),
            None => crate::characteristics::uniform_times(self.horizon, self.samples),
        }
    }

    /// Integrator settings with the working rectangle as exit domain.
    pub fn integrator(&self) -> IntegratorConfig {
        let mut cfg = self.integrator.clone();
        if cfg.domain.is_none() {
            cfg.domain = Some(self.domain.rect);
        }
        cfg
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(s).map_err(|e| Error::Parse { path: PathBuf::from("<toml>"), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)
            .map_err(|e| Error::Parse { path: PathBuf::from("<json>"), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a `.toml` or `.json` file (decided by extension; TOML otherwise).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse { path: path.to_path_buf(), message },
            other => other,
        })
    }
}

use std::path::PathBuf;

use crate::geom::Vec2;

/// Errors raised by the field, integration, inversion and harness layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("hypothesis violated: b = {value:.6e} <= 0 at ({x:.6}, {y:.6})", x = point.x, y = point.y)]
    Hypothesis { point: Vec2, value: f64 },

    #[error("trajectory from ({x0:.6}, {y0:.6}) left the domain at t = {t:.6e}", x0 = seed.x, y0 = seed.y)]
    DomainExit { seed: Vec2, t: f64 },

    #[error("caustic crossed: det DX = {det:.3e} at t = {t:.6e}")]
    CausticCrossed { t: f64, det: f64 },

    #[error("oscillatory sample under-resolved: {points_per_period:.2} points per period, need {required}")]
    UnderResolved { points_per_period: f64, required: usize },

    #[error("phase solve did not converge (contraction factor {contraction:.4}, residual {residual:.3e})")]
    PhaseSolve { contraction: f64, residual: f64 },

    #[error("flow-map inversion failed for target ({x:.6}, {y:.6}): {reason}", x = target.x, y = target.y)]
    Inversion { target: Vec2, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("could not parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

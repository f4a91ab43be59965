//! Command implementations behind the `conformal` binary.

pub mod commands;
pub mod config;
pub mod suite;
pub mod svg;

use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Geometry(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("invalid suite: {0}")]
    Suite(String),
    #[error("no cases")]
    NoCases,
}

impl CliError {
    /// 2 for configuration and geometry errors, 3 for an empty or invalid
    /// suite.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NoCases | CliError::Suite(_) => 3,
            _ => 2,
        }
    }
}

macro_rules! geometry_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Geometry(e.to_string())
            }
        }
    )*};
}

geometry_from!(
    conformal_core::DomainError,
    conformal_core::density::DensityError,
    conformal_core::geodesic::GeodesicError,
    conformal_core::smoothing::SmoothingError,
    conformal_core::cat0::Cat0Error
);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub h: Option<f64>,
    pub stencil: Option<usize>,
}

/// Output directory, created on demand.
pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Output { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.text(name, &text)
    }

    pub fn text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&p, text)?;
        Ok(p)
    }

    pub fn csv<R: Serialize>(&self, name: &str, rows: &[R]) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p).map_err(|e| CliError::Io(e.to_string()))?;
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(p)
    }
}

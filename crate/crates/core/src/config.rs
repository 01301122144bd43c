//! Run configuration shared by the command-line tool and tests.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lqr::LqrWeights;
use crate::predictor::PredictorParams;
use crate::rl_baseline::{RewardConfig, DEFAULT_CELL_SIZE, DEFAULT_VI_TOLERANCE};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrConfig {
    /// `Q = q I4` unless `q_matrix` is given.
    pub q: f64,
    /// `R = r I2` unless `r_matrix` is given.
    pub r: f64,
    pub q_matrix: Option<[[f64; 4]; 4]>,
    pub r_matrix: Option<[[f64; 2]; 2]>,
    /// Cross term, zero when absent.
    pub s_matrix: Option<[[f64; 2]; 4]>,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LqrConfig {
    fn default() -> Self {
        Self {
            q: 0.02,
            r: 1.0,
            q_matrix: None,
            r_matrix: None,
            s_matrix: None,
            tolerance: crate::lqr::DEFAULT_TOLERANCE,
            max_iter: crate::lqr::DEFAULT_MAX_ITER,
        }
    }
}

impl LqrConfig {
    pub fn weights(&self) -> LqrWeights {
        let mut w = LqrWeights::scalar(self.q, self.r);
        if let Some(m) = self.q_matrix {
            w.q = Matrix4::from_fn(|i, j| m[i][j]);
        }
        if let Some(m) = self.r_matrix {
            w.r = Matrix2::from_fn(|i, j| m[i][j]);
        }
        if let Some(m) = self.s_matrix {
            w.s = Matrix4x2::from_fn(|i, j| m[i][j]);
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// `W = scale * diag(diag)` unless `matrix` is given.
    pub scale: f64,
    pub diag: [f64; 4],
    pub matrix: Option<[[f64; 4]; 4]>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            scale: 0.3,
            diag: [0.1, 0.1, 0.1, PI / 180.0],
            matrix: None,
        }
    }
}

impl NoiseConfig {
    pub fn matrix(&self) -> Matrix4<f64> {
        match self.matrix {
            Some(m) => Matrix4::from_fn(|i, j| m[i][j]),
            None => Matrix4::from_diagonal(&Vector4::from(self.diag)) * self.scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    pub alpha: f64,
    pub samples: usize,
    pub cell_size: f64,
    pub tolerance: f64,
    pub rewards: RewardConfig,
    /// Directory for solved value functions; none disables caching.
    pub cache_dir: Option<PathBuf>,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            alpha: 20.0,
            samples: 100,
            cell_size: DEFAULT_CELL_SIZE,
            tolerance: DEFAULT_VI_TOLERANCE,
            rewards: RewardConfig::default(),
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub synth: u64,
    pub rl: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub iterations: usize,
    pub taus: Vec<usize>,
    /// Goal id for the sampling baseline.
    pub goal: u32,
    /// Start state `[x, y, v, theta]`.
    pub start: [f64; 4],
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            iterations: 1000,
            taus: crate::evaluation::BENCH_HORIZONS.to_vec(),
            goal: 8,
            start: crate::scenario::INTERSECTION_START,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Map document; the built-in four-way intersection when absent.
    pub map: Option<PathBuf>,
    pub t_s: f64,
    /// Prediction steps for `predict`.
    pub horizon: usize,
    /// Evaluation horizons in steps.
    pub taus: Vec<usize>,
    /// Switch distance for edges that do not set their own.
    pub switch_distance: f64,
    pub max_branches: usize,
    pub allow_uturn: bool,
    /// Evaluate every `stride`-th start step.
    pub stride: usize,
    pub lqr: LqrConfig,
    pub noise: NoiseConfig,
    pub rl: RlConfig,
    pub seeds: SeedConfig,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            map: None,
            t_s: 0.1,
            horizon: 200,
            taus: vec![10, 50, 100, 150, 200],
            switch_distance: crate::map::DEFAULT_SWITCH_DISTANCE,
            max_branches: 64,
            allow_uturn: false,
            stride: 1,
            lqr: LqrConfig::default(),
            noise: NoiseConfig::default(),
            rl: RlConfig::default(),
            seeds: SeedConfig::default(),
            bench: BenchSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|span| {
                    let before = &text[..span.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                    format!("line {line}, column {column}: ")
                })
                .unwrap_or_default();
            ConfigError::Parse {
                path: path.to_path_buf(),
                message: format!("{location}{}", e.message()),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let params = self.predictor_params();
        params
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.rl
            .rewards
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.rl.alpha > 0.0 && self.rl.alpha.is_finite()) {
            return Err(ConfigError::Invalid(format!("rl.alpha = {}", self.rl.alpha)));
        }
        if self.rl.samples == 0 {
            return Err(ConfigError::Invalid("rl.samples must be >= 1".into()));
        }
        if !(self.switch_distance >= 0.0 && self.switch_distance.is_finite()) {
            return Err(ConfigError::Invalid(format!("switch_distance = {}", self.switch_distance)));
        }
        if self.taus.is_empty() || self.taus.contains(&0) {
            return Err(ConfigError::Invalid("taus must be non-empty and positive".into()));
        }
        Ok(())
    }

    pub fn predictor_params(&self) -> PredictorParams {
        PredictorParams {
            w: self.noise.matrix(),
            horizon: self.horizon.max(1),
            t_s: self.t_s,
            max_branches: self.max_branches,
            weights: self.lqr.weights(),
            allow_uturn: self.allow_uturn,
            lqr_tol: self.lqr.tolerance,
            lqr_max_iter: self.lqr.max_iter,
        }
    }
}

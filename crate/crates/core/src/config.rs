//! Experiment configuration, read from and written to TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{AuxiliaryConfig, DEFAULT_FLOOR_TOL};
use crate::integrate::StepControl;
use crate::model::{InitialData, ModelParams, Profile};
use crate::spectral::Generator;
use crate::thresholds::{AscentOptions, EmbeddingSpace};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("cannot serialize config: {0}")]
    Serialize(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub mesh: MeshConfig,
    pub initial: InitialConfig,
    pub step: StepControl,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub picard: Option<PicardConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub n_elem: usize,
}

/// Named profiles available from a config file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    #[default]
    Zero,
    LinearRamp,
    SineHalfwave,
    QuadraticBump,
}

impl ProfileKind {
    pub fn profile(self, amplitude: f64) -> Profile {
        let base = match self {
            ProfileKind::Zero => Profile::Zero,
            ProfileKind::LinearRamp => Profile::LinearRamp,
            ProfileKind::SineHalfwave => Profile::SineHalfwave,
            ProfileKind::QuadraticBump => Profile::QuadraticBump,
        };
        if amplitude == 1.0 {
            base
        } else {
            base.scaled(amplitude)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub u0: ProfileKind,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub u1: ProfileKind,
    #[serde(default = "one")]
    pub u1_amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl InitialConfig {
    pub fn data(&self) -> InitialData {
        InitialData::new(
            self.u0.profile(self.amplitude),
            self.u1.profile(self.u1_amplitude),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Space whose embedding constant sets `α₁` and `d`.
    #[serde(default = "default_space")]
    pub space: EmbeddingSpace,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_true")]
    pub auto_epsilon: bool,
    /// Fit window as fractions of the run length.
    #[serde(default = "default_fit_window")]
    pub fit_window: [f64; 2],
    #[serde(default = "default_floor_tol")]
    pub floor_tol: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_space() -> EmbeddingSpace {
    EmbeddingSpace::default()
}

fn default_epsilon() -> f64 {
    AuxiliaryConfig::default().epsilon
}

fn default_true() -> bool {
    true
}

fn default_fit_window() -> [f64; 2] {
    [0.2, 0.9]
}

fn default_floor_tol() -> f64 {
    DEFAULT_FLOOR_TOL
}

fn default_restarts() -> usize {
    AscentOptions::default().restarts
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            space: default_space(),
            epsilon: default_epsilon(),
            auto_epsilon: true,
            fit_window: default_fit_window(),
            floor_tol: default_floor_tol(),
            restarts: default_restarts(),
        }
    }
}

impl DiagnosticsConfig {
    pub fn auxiliary(&self) -> AuxiliaryConfig {
        AuxiliaryConfig {
            epsilon: self.epsilon,
            auto_epsilon: self.auto_epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Run,
    Thresholds,
    Sweep,
    Picard,
    OracleCompare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: ExperimentKind,
    /// Seed of the threshold restarts. TOML integers are signed, so seeds
    /// above `i64::MAX` load but cannot be written back.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

/// Cartesian grid; an empty parameter list keeps the base value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub amplitudes: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub r: Vec<f64>,
    #[serde(default)]
    pub m: Vec<f64>,
    #[serde(default)]
    pub p: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardConfig {
    #[serde(default = "default_horizons")]
    pub horizons: Vec<f64>,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_picard_tol")]
    pub tol: f64,
}

fn default_horizons() -> Vec<f64> {
    vec![0.02, 0.08, 0.32]
}

fn default_k_max() -> usize {
    30
}

fn default_picard_tol() -> f64 {
    1e-9
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            horizons: default_horizons(),
            k_max: default_k_max(),
            tol: default_picard_tol(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_n_modes")]
    pub n_modes: Vec<usize>,
    #[serde(default = "default_generator")]
    pub generator: Generator,
    #[serde(default = "default_oracle_tol")]
    pub tol: f64,
}

fn default_n_modes() -> Vec<usize> {
    vec![2, 4, 6, 8]
}

fn default_generator() -> Generator {
    Generator::Monomials
}

fn default_oracle_tol() -> f64 {
    1e-10
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n_modes: default_n_modes(),
            generator: default_generator(),
            tol: default_oracle_tol(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Serialize(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn ascent_options(&self) -> AscentOptions {
        AscentOptions {
            restarts: self.diagnostics.restarts,
            seed: self.experiment.seed,
            ..AscentOptions::default()
        }
    }
}

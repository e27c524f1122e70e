//! Experiment configuration: defaults, an optional `key = value` file and
//! command-line flags, applied in that order.
//!
//! The file format is one `key = value` pair per line. Keys are the long
//! flag names without the leading dashes (`t-final = 5`, `irl-m = 15`).
//! Blank lines and everything after `#` are ignored.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use sdre_core::dynamics::{benchmark2d, SdcModel, SimulationSettings};
use sdre_core::irl::{ExplorationSpec, IrlConfig};
use sdre_core::Matrix;

/// Seed source used when neither the file nor the flags set one.
pub const SEED_ENV: &str = "SDRE_SEED";

/// Angular frequencies (rad/s) of the sinusoid exploration; amplitudes all equal the
/// noise magnitude.
pub const SINUSOID_FREQUENCIES: [f64; 5] = [0.7, 1.9, 4.3, 9.1, 17.3];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    /// Line in the config file, `None` for flags and whole-config checks.
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, line: Option<usize>, message: impl Into<String>) -> Self {
        Self { key: key.into(), line, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "invalid `{}` on line {}: {}", self.key, line, self.message),
            None => write!(f, "invalid `{}`: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Controller {
    Sdre,
    IrlSdre,
    OpenLoop,
}

impl Controller {
    pub const ALL: [Controller; 3] = [Controller::Sdre, Controller::IrlSdre, Controller::OpenLoop];

    pub fn name(self) -> &'static str {
        match self {
            Controller::Sdre => "sdre",
            Controller::IrlSdre => "irl-sdre",
            Controller::OpenLoop => "open-loop",
        }
    }

    fn parse(value: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    Sinusoid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub system: String,
    pub controller: Controller,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub t_final: f64,
    pub guard: f64,
    pub seed: u64,
    pub irl_intervals: usize,
    pub irl_interval_length: f64,
    pub irl_sample_period: f64,
    pub irl_max_iterations: usize,
    pub irl_tolerance: f64,
    pub noise_magnitude: f64,
    pub noise_kind: NoiseKind,
    /// CSV destination; no file is written when absent.
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let irl = IrlConfig::default();
        Self {
            system: "benchmark2d".into(),
            controller: Controller::Sdre,
            x0: vec![3.0, 1.0],
            dt: 1e-3,
            t_final: 10.0,
            guard: 1e6,
            seed: 0,
            irl_intervals: irl.intervals,
            irl_interval_length: irl.interval_length,
            irl_sample_period: irl.sample_period,
            irl_max_iterations: irl.max_iterations,
            irl_tolerance: irl.tolerance,
            noise_magnitude: 0.01,
            noise_kind: NoiseKind::Gaussian,
            output_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn model(&self) -> SdcModel {
        system_model(&self.system).expect("system name checked by validate")
    }

    pub fn settings(&self) -> SimulationSettings {
        SimulationSettings { dt: self.dt, t_final: self.t_final, guard: self.guard }
    }

    pub fn irl(&self) -> IrlConfig {
        let exploration = match self.noise_kind {
            NoiseKind::Gaussian => ExplorationSpec::GaussianWhite { magnitude: self.noise_magnitude, seed: self.seed },
            NoiseKind::Sinusoid => ExplorationSpec::SinusoidSum {
                amplitudes: vec![self.noise_magnitude; SINUSOID_FREQUENCIES.len()],
                frequencies: SINUSOID_FREQUENCIES.to_vec(),
            },
        };
        IrlConfig {
            intervals: self.irl_intervals,
            interval_length: self.irl_interval_length,
            sample_period: self.irl_sample_period,
            max_iterations: self.irl_max_iterations,
            tolerance: self.irl_tolerance,
            exploration,
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str, line: Option<usize>) -> Result<(), ConfigError> {
        let err = |message: String| ConfigError::new(key, line, message);
        let value = value.trim();
        match key {
            "system" => self.system = value.to_string(),
            "controller" => {
                self.controller = Controller::parse(value)
                    .ok_or_else(|| err(format!("unknown controller `{value}` (sdre, irl-sdre, open-loop)")))?
            }
            "x0" => self.x0 = parse_vector(value).map_err(err)?,
            "dt" => self.dt = parse_number(value).map_err(err)?,
            "t-final" => self.t_final = parse_number(value).map_err(err)?,
            "guard" => self.guard = parse_number(value).map_err(err)?,
            "seed" => self.seed = value.parse().map_err(|_| err(format!("`{value}` is not an unsigned integer")))?,
            "out" => self.output_path = Some(PathBuf::from(value)),
            "irl-m" => self.irl_intervals = parse_count(value).map_err(err)?,
            "irl-delta" => self.irl_interval_length = parse_number(value).map_err(err)?,
            "irl-ts" => self.irl_sample_period = parse_number(value).map_err(err)?,
            "irl-nmax" => self.irl_max_iterations = parse_count(value).map_err(err)?,
            "irl-tol" => self.irl_tolerance = parse_number(value).map_err(err)?,
            "noise-magnitude" => self.noise_magnitude = parse_number(value).map_err(err)?,
            "noise-kind" => {
                self.noise_kind = match value {
                    "gaussian" => NoiseKind::Gaussian,
                    "sinusoid" => NoiseKind::Sinusoid,
                    _ => return Err(err(format!("unknown noise kind `{value}` (gaussian, sinusoid)"))),
                }
            }
            _ => return Err(err("unknown key".into())),
        }
        Ok(())
    }

    /// Applies every setting of a config file.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::new(content, Some(line), "expected `key = value`"))?;
            self.set(key.trim(), value, Some(line))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", None, format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let model = system_model(&self.system).ok_or_else(|| {
            ConfigError::new("system", None, format!("unknown system `{}` (benchmark2d)", self.system))
        })?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigError::new("dt", None, format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return Err(ConfigError::new("t-final", None, format!("must be at least dt, got {}", self.t_final)));
        }
        if self.guard.is_nan() || self.guard <= 0.0 {
            return Err(ConfigError::new("guard", None, format!("must be positive, got {}", self.guard)));
        }
        if self.x0.len() != model.state_dim() {
            return Err(ConfigError::new(
                "x0",
                None,
                format!("{} entries for a {}-state system", self.x0.len(), model.state_dim()),
            ));
        }
        if !(self.noise_magnitude >= 0.0 && self.noise_magnitude.is_finite()) {
            return Err(ConfigError::new(
                "noise-magnitude",
                None,
                format!("must be non-negative, got {}", self.noise_magnitude),
            ));
        }
        if self.controller == Controller::IrlSdre {
            self.irl().validate(model.state_dim()).map_err(|e| ConfigError::new("irl", None, e.to_string()))?;
        }
        Ok(())
    }
}

/// Built-in system registry.
pub fn system_model(name: &str) -> Option<SdcModel> {
    match name {
        "benchmark2d" => Some(benchmark2d()),
        _ => None,
    }
}

fn parse_number(value: &str) -> Result<f64, String> {
    value.parse::<f64>().ok().filter(|v| !v.is_nan()).ok_or_else(|| format!("`{value}` is not a number"))
}

fn parse_count(value: &str) -> Result<usize, String> {
    value.parse().map_err(|_| format!("`{value}` is not a non-negative integer"))
}

/// Parses `v1,v2,…`.
pub fn parse_vector(value: &str) -> Result<Vec<f64>, String> {
    value.split(',').map(|v| parse_number(v.trim())).collect()
}

/// Parses a matrix written row by row: `1,1;1,-1`.
pub fn parse_matrix(value: &str) -> Result<Matrix, String> {
    let rows: Vec<Vec<f64>> = value.split(';').map(parse_vector).collect::<Result<_, _>>()?;
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(format!("rows of `{value}` have different lengths"));
    }
    Matrix::new(rows.len(), cols, rows.concat()).map_err(|e| e.to_string())
}

/// Experiment flags shared by `run` and `compare`.
#[derive(Args, Clone, Debug, Default)]
pub struct ExperimentArgs {
    /// Config file of `key = value` lines; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in system
    #[arg(long)]
    pub system: Option<String>,
    /// sdre, irl-sdre or open-loop
    #[arg(long)]
    pub controller: Option<String>,
    /// Initial state, comma separated
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub t_final: Option<String>,
    /// State norm that ends a run as diverged
    #[arg(long, allow_hyphen_values = true)]
    pub guard: Option<String>,
    /// Exploration seed (falls back to $SDRE_SEED)
    #[arg(long, allow_hyphen_values = true)]
    pub seed: Option<String>,
    /// CSV output path
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub irl: IrlArgs,
}

/// Learner flags.
#[derive(Args, Clone, Debug, Default)]
pub struct IrlArgs {
    /// Sample points per rollout
    #[arg(long, allow_hyphen_values = true)]
    pub irl_m: Option<String>,
    /// Interval length in seconds
    #[arg(long, allow_hyphen_values = true)]
    pub irl_delta: Option<String>,
    /// Sampling period in seconds
    #[arg(long, allow_hyphen_values = true)]
    pub irl_ts: Option<String>,
    /// Policy-iteration cap
    #[arg(long, allow_hyphen_values = true)]
    pub irl_nmax: Option<String>,
    /// Gain-change stopping tolerance
    #[arg(long, allow_hyphen_values = true)]
    pub irl_tol: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub noise_magnitude: Option<String>,
    /// gaussian or sinusoid
    #[arg(long)]
    pub noise_kind: Option<String>,
}

impl IrlArgs {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        [
            ("irl-m", &self.irl_m),
            ("irl-delta", &self.irl_delta),
            ("irl-ts", &self.irl_ts),
            ("irl-nmax", &self.irl_nmax),
            ("irl-tol", &self.irl_tol),
            ("noise-magnitude", &self.noise_magnitude),
            ("noise-kind", &self.noise_kind),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
        .collect()
    }

    /// Applies the learner flags on top of `config`.
    pub fn apply(&self, config: &mut ExperimentConfig) -> Result<(), ConfigError> {
        self.pairs().into_iter().try_for_each(|(k, v)| config.set(k, &v, None))
    }
}

impl ExperimentArgs {
    /// Defaults, then `$SDRE_SEED`, then the config file, then the flags.
    pub fn resolve(&self, seed_env: Option<&str>) -> Result<ExperimentConfig, ConfigError> {
        let mut config = ExperimentConfig::default();
        if let Some(value) = seed_env {
            config.set("seed", value, None).map_err(|e| ConfigError::new(SEED_ENV, None, e.message))?;
        }
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        let flags = [
            ("system", &self.system),
            ("controller", &self.controller),
            ("x0", &self.x0),
            ("dt", &self.dt),
            ("t-final", &self.t_final),
            ("guard", &self.guard),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(value) = value {
                config.set(key, value, None)?;
            }
        }
        if let Some(out) = &self.out {
            config.output_path = Some(out.clone());
        }
        self.irl.apply(&mut config)?;
        config.validate()?;
        Ok(config)
    }
}

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spde_core::solver::integer_ratio;
use spde_core::{validate_moment_exponent, AuditSettings, ModelParams, ModelSpec64, Stepper};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("ratio error: {0}")]
    Ratio(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Check,
    Simulate,
    Converge,
    Moments,
    Equicontinuity,
    Continuity,
    Uniqueness,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Simulate => "simulate",
            Command::Converge => "converge",
            Command::Moments => "moments",
            Command::Equicontinuity => "equicontinuity",
            Command::Continuity => "continuity",
            Command::Uniqueness => "uniqueness",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Initial data: `"zero"`, `"e3"`, `"pow:2"` (`Σ k^{-2} e_k`), `"1,0.5"`, or a JSON array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Named(String),
    Coeffs(Vec<f64>),
}

impl StateSpec {
    pub fn coeffs(&self, n: usize) -> Result<Vec<f64>, ConfigError> {
        let bad = |s: &str| ConfigError::Invalid(format!("cannot interpret state `{s}`"));
        let mut out = vec![0.0; n];
        match self {
            StateSpec::Coeffs(v) => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o = *x;
                }
            }
            StateSpec::Named(s) => {
                let s = s.trim();
                if s == "zero" {
                } else if let Some(k) = s.strip_prefix('e').and_then(|k| k.parse::<usize>().ok()) {
                    if k == 0 {
                        return Err(bad(s));
                    }
                    if k <= n {
                        out[k - 1] = 1.0;
                    }
                } else if let Some(a) = s.strip_prefix("pow:") {
                    let a: f64 = a.parse().map_err(|_| bad(s))?;
                    for (k, o) in out.iter_mut().enumerate() {
                        *o = ((k + 1) as f64).powf(-a);
                    }
                } else {
                    let v: Vec<f64> = s
                        .split(',')
                        .map(|x| x.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad(s))?;
                    for (o, x) in out.iter_mut().zip(v) {
                        *o = x;
                    }
                }
            }
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(ConfigError::Invalid(
                "state has non-finite coefficients".into(),
            ));
        }
        Ok(out)
    }
}

impl std::str::FromStr for StateSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let spec = StateSpec::Named(s.to_string());
        spec.coeffs(1)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: Option<String>,
    pub sigma: Option<f64>,
    pub p: Option<f64>,
    pub c: Option<f64>,
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    pub n_modes: Option<usize>,
    pub grid_size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub save_dt: Option<f64>,
    #[serde(rename = "M")]
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub stepper: Option<Stepper>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    pub n_samples: Option<usize>,
    pub n_lambda: Option<usize>,
    pub n_probe: Option<usize>,
    pub tol: Option<f64>,
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub p: Option<f64>,
    pub alpha: Option<f64>,
    pub x0: Option<StateSpec>,
    pub direction: Option<StateSpec>,
    pub deltas: Option<Vec<f64>>,
    pub levels: Option<Vec<usize>>,
    pub perturbations: Option<Vec<f64>>,
    pub coarsening: Option<Vec<usize>>,
    pub second_stepper: Option<Stepper>,
    pub halve_second: Option<bool>,
    pub dump_noise: Option<bool>,
}

/// The on-disk JSON schema. Every field is optional; missing values take defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub command: Option<Command>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub basis: BasisSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub out_dir: Option<PathBuf>,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            match inner.classify() {
                serde_json::error::Category::Data => ConfigError::Schema {
                    path,
                    message: inner.to_string(),
                },
                _ => ConfigError::Parse {
                    line: inner.line(),
                    column: inner.column(),
                    message: inner.to_string(),
                },
            }
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Fields set in `other` win.
    pub fn overlay(mut self, other: ConfigFile) -> Self {
        macro_rules! take {
            ($($f:ident).+) => {
                if other.$($f).+.is_some() {
                    self.$($f).+ = other.$($f).+;
                }
            };
        }
        take!(command);
        take!(model.name);
        take!(model.sigma);
        take!(model.p);
        take!(model.c);
        take!(model.nu);
        take!(basis.n_modes);
        take!(basis.grid_size);
        take!(run.t_end);
        take!(run.dt);
        take!(run.save_dt);
        take!(run.paths);
        take!(run.seed);
        take!(run.stepper);
        take!(audit.n_samples);
        take!(audit.n_lambda);
        take!(audit.n_probe);
        take!(audit.tol);
        take!(audit.horizon);
        take!(experiment.p);
        take!(experiment.alpha);
        take!(experiment.x0);
        take!(experiment.direction);
        take!(experiment.deltas);
        take!(experiment.levels);
        take!(experiment.perturbations);
        take!(experiment.coarsening);
        take!(experiment.second_stepper);
        take!(experiment.halve_second);
        take!(experiment.dump_noise);
        take!(out_dir);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSettings {
    pub t_end: f64,
    pub dt: f64,
    pub save_dt: f64,
    #[serde(rename = "M")]
    pub paths: usize,
    pub seed: u64,
    pub stepper: Stepper,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSettings {
    pub p: f64,
    pub alpha: f64,
    pub x0: Vec<f64>,
    pub direction: Vec<f64>,
    pub deltas: Vec<f64>,
    pub levels: Vec<usize>,
    pub perturbations: Vec<f64>,
    pub coarsening: Vec<usize>,
    pub second_stepper: Stepper,
    pub halve_second: bool,
    pub dump_noise: bool,
}

/// A fully resolved and validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub model_name: String,
    pub model_params: ModelParams<f64>,
    #[serde(skip)]
    pub model: ModelSpec64,
    pub n_modes: usize,
    pub grid_size: usize,
    pub run: RunSettings,
    pub audit: AuditSettings,
    pub experiment: ExperimentSettings,
    pub out_dir: PathBuf,
}

const DEFAULT_N_MODES: usize = 16;

impl ExperimentConfig {
    pub fn resolve(file: ConfigFile) -> Result<Self, ConfigError> {
        let command = file
            .command
            .ok_or_else(|| ConfigError::Invalid("no command given".into()))?;
        let model_name = file.model.name.clone().unwrap_or_else(|| "heat-ou".into());
        let model_params = ModelParams {
            sigma: file.model.sigma,
            p: file.model.p,
            c: file.model.c,
            nu: file.model.nu,
        };
        let model = ModelSpec64::by_name(&model_name, &model_params)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown model `{model_name}`")))?;

        let n_modes = file.basis.n_modes.unwrap_or(DEFAULT_N_MODES);
        if n_modes == 0 {
            return Err(ConfigError::Invalid("n_modes must be positive".into()));
        }
        let grid_size = file.basis.grid_size.unwrap_or(4 * n_modes);
        if grid_size < 4 * n_modes {
            return Err(ConfigError::Invalid(format!(
                "grid_size {grid_size} must be at least 4 * n_modes = {}",
                4 * n_modes
            )));
        }

        let default_paths = if command == Command::Simulate { 1 } else { 100 };
        let run = RunSettings {
            t_end: file.run.t_end.unwrap_or(1.0),
            dt: file.run.dt.unwrap_or(1e-3),
            save_dt: file.run.save_dt.unwrap_or(1e-2),
            paths: file.run.paths.unwrap_or(default_paths),
            seed: file.run.seed.unwrap_or(0),
            stepper: file.run.stepper.unwrap_or_else(|| model.default_stepper()),
        };
        for (name, v) in [
            ("t_end", run.t_end),
            ("dt", run.dt),
            ("save_dt", run.save_dt),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::Invalid(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if run.paths == 0 {
            return Err(ConfigError::Invalid("M must be positive".into()));
        }
        integer_ratio(run.save_dt, run.dt, "save_dt / dt")
            .map_err(|e| ConfigError::Ratio(e.to_string()))?;
        integer_ratio(run.t_end, run.save_dt, "t_end / save_dt")
            .map_err(|e| ConfigError::Ratio(e.to_string()))?;

        let defaults = AuditSettings::default();
        let audit = AuditSettings {
            n_samples: file.audit.n_samples.unwrap_or(defaults.n_samples),
            seed: run.seed,
            n_lambda: file.audit.n_lambda.unwrap_or(defaults.n_lambda),
            n_probe: file.audit.n_probe.unwrap_or(defaults.n_probe),
            tol: file.audit.tol.unwrap_or(defaults.tol),
            horizon: file.audit.horizon.unwrap_or(run.t_end),
        };

        let e = &file.experiment;
        let levels = e
            .levels
            .clone()
            .unwrap_or_else(|| vec![n_modes, 2 * n_modes, 4 * n_modes]);
        let state_len = levels.iter().copied().max().unwrap_or(n_modes).max(n_modes);
        let x0 =
            e.x0.clone()
                .unwrap_or_else(|| StateSpec::Named("e1".into()))
                .coeffs(state_len)?;
        let direction = e
            .direction
            .clone()
            .unwrap_or_else(|| StateSpec::Named("e1".into()))
            .coeffs(n_modes)?;
        let experiment = ExperimentSettings {
            p: e.p.unwrap_or(2.0),
            alpha: e.alpha.unwrap_or(model.alpha),
            x0,
            direction,
            deltas: e.deltas.clone().unwrap_or_else(|| {
                [2.0, 4.0, 8.0, 16.0, 32.0]
                    .iter()
                    .map(|k| k * run.save_dt)
                    .collect()
            }),
            levels,
            perturbations: e
                .perturbations
                .clone()
                .unwrap_or_else(|| vec![1.0, 0.5, 0.25, 0.125, 0.0625]),
            coarsening: e.coarsening.clone().unwrap_or_else(|| vec![2, 4, 8, 16]),
            second_stepper: e.second_stepper.unwrap_or(run.stepper),
            halve_second: e.halve_second.unwrap_or(true),
            dump_noise: e.dump_noise.unwrap_or(false),
        };

        match command {
            Command::Moments => validate_moment_exponent(&model, experiment.p)
                .map_err(|err| ConfigError::Invalid(err.to_string()))?,
            Command::Equicontinuity => {
                for &d in &experiment.deltas {
                    integer_ratio(d, run.save_dt, "delta / save_dt")
                        .map_err(|e| ConfigError::Ratio(e.to_string()))?;
                }
            }
            Command::Uniqueness => {
                let coarsest = run.dt * *experiment.coarsening.iter().max().unwrap_or(&1) as f64;
                integer_ratio(run.save_dt, coarsest, "save_dt / coarsest dt")
                    .map_err(|e| ConfigError::Ratio(e.to_string()))?;
            }
            _ => {}
        }

        Ok(Self {
            command,
            model_name,
            model_params,
            model,
            n_modes,
            grid_size,
            run,
            audit,
            experiment,
            out_dir: file.out_dir.unwrap_or_else(|| PathBuf::from("out")),
        })
    }
}

/// Reads `path` if given, lays `overrides` on top and validates the result.
pub fn load_config(
    path: Option<&Path>,
    overrides: ConfigFile,
) -> Result<ExperimentConfig, ConfigError> {
    let base = match path {
        Some(p) => ConfigFile::from_path(p)?,
        None => ConfigFile::default(),
    };
    ExperimentConfig::resolve(base.overlay(overrides))
}

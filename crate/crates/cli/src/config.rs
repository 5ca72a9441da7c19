use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use curvlab::flow::theta_bar_estimate;
use curvlab::oracle::OracleOptions;
use curvlab::{MIN_DIM, USER_MAX_DIM};

use crate::CliError;

/// Flags shared by every subcommand. Each may also be set in a `--config`
/// file of `key = value` lines; flags win over the file.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct Common {
    /// key = value file with defaults for the flags below
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Dimension
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// A number, or `auto` for half the estimated θ̂(n)
    #[arg(long, global = true)]
    pub theta: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Random restarts of the curvature oracles
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    /// Scalar-curvature growth factor at which trajectories stop
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Write the JSON report here
    #[arg(long, global = true)]
    #[serde(skip)]
    pub json: Option<PathBuf>,
    /// Write plot-ready CSV here
    #[arg(long, global = true)]
    #[serde(skip)]
    pub csv: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn as_string(key: &str, v: &toml::Value) -> Result<String, CliError> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(x) => Ok(x.to_string()),
        _ => Err(config_error(format!("{key}: expected a string or number"))),
    }
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64, CliError> {
    match v {
        toml::Value::Integer(i) => Ok(*i as f64),
        toml::Value::Float(x) => Ok(*x),
        _ => Err(config_error(format!("{key}: expected a number"))),
    }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize, CliError> {
    v.as_integer()
        .and_then(|i| usize::try_from(i).ok())
        .ok_or_else(|| config_error(format!("{key}: expected a nonnegative integer")))
}

impl Common {
    /// Fills unset fields from the config file, if one was given.
    pub fn merged(mut self) -> Result<Self, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        for (key, v) in &table {
            let k = key.as_str();
            match k {
                "n" => self.n = self.n.or(Some(as_usize(k, v)?)),
                "sigma" => self.sigma = self.sigma.or(Some(as_f64(k, v)?)),
                "theta" => self.theta = self.theta.take().or(Some(as_string(k, v)?)),
                "seed" => {
                    let seed = v.as_integer().and_then(|i| u64::try_from(i).ok());
                    self.seed = self.seed.or(Some(
                        seed.ok_or_else(|| config_error("seed: expected an integer"))?,
                    ));
                }
                "samples" => self.samples = self.samples.or(Some(as_usize(k, v)?)),
                "restarts" => self.restarts = self.restarts.or(Some(as_usize(k, v)?)),
                "horizon" => self.horizon = self.horizon.or(Some(as_f64(k, v)?)),
                "tol" => self.tol = self.tol.or(Some(as_f64(k, v)?)),
                "json" => self.json = self.json.take().or(Some(as_string(k, v)?.into())),
                "csv" => self.csv = self.csv.take().or(Some(as_string(k, v)?.into())),
                "threads" => self.threads = self.threads.or(Some(as_usize(k, v)?)),
                _ => {
                    return Err(config_error(format!(
                        "unknown key `{key}` in {}",
                        path.display()
                    )))
                }
            }
        }
        Ok(self)
    }
}

/// Validated settings for one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(flatten)]
    pub flags: Common,
}

impl RunConfig {
    pub fn new(command: &str, flags: Common) -> Result<Self, CliError> {
        let flags = flags.merged()?;
        if let Some(n) = flags.n {
            if !(MIN_DIM..=USER_MAX_DIM).contains(&n) {
                return Err(config_error(format!(
                    "n = {n} outside {MIN_DIM}..={USER_MAX_DIM}"
                )));
            }
        }
        if let Some(s) = flags.sigma {
            if !(s > 0.0 && s <= 2.0) {
                return Err(config_error(format!("sigma = {s} outside (0, 2]")));
            }
        }
        if flags.samples == Some(0) {
            return Err(config_error("samples must be positive"));
        }
        if let Some(h) = flags.horizon {
            if !(h > 1.0 && h.is_finite()) {
                return Err(config_error(format!("horizon = {h} must exceed 1")));
            }
        }
        if let Some(t) = flags.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(config_error(format!("tol = {t} must be positive")));
            }
        }
        if flags.threads == Some(0) {
            return Err(config_error("threads must be positive"));
        }
        Ok(Self {
            command: command.to_string(),
            flags,
        })
    }

    pub fn n(&self, default: usize) -> usize {
        self.flags.n.unwrap_or(default)
    }

    pub fn sigma(&self, default: f64) -> f64 {
        self.flags.sigma.unwrap_or(default)
    }

    /// θ for dimension `n`. `auto`, and an unset flag without a default, mean θ̂(n)/2.
    pub fn theta(&self, n: usize, default: Option<f64>) -> Result<f64, CliError> {
        let raw = match (&self.flags.theta, default) {
            (Some(raw), _) => raw.clone(),
            (None, Some(v)) => return Ok(v),
            (None, None) => "auto".into(),
        };
        if raw == "auto" {
            return Ok(theta_bar_estimate(n, &[])?.theta_hat / 2.0);
        }
        let theta: f64 = raw
            .parse()
            .map_err(|_| config_error(format!("theta = {raw} is neither a number nor auto")))?;
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(config_error(format!("theta = {theta} must be >= 0")));
        }
        Ok(theta)
    }

    /// The seed, which randomized commands must be given explicitly.
    pub fn seed(&self) -> Result<u64, CliError> {
        self.flags
            .seed
            .ok_or_else(|| config_error(format!("{} is randomized and needs --seed", self.command)))
    }

    pub fn samples(&self, default: usize) -> usize {
        self.flags.samples.unwrap_or(default)
    }

    pub fn horizon(&self, default: f64) -> f64 {
        self.flags.horizon.unwrap_or(default)
    }

    pub fn tol(&self, default: f64) -> f64 {
        self.flags.tol.unwrap_or(default)
    }

    pub fn oracle(&self) -> OracleOptions {
        let defaults = OracleOptions::default();
        OracleOptions {
            restarts: self.flags.restarts.unwrap_or(defaults.restarts),
            seed: self.flags.seed.unwrap_or(defaults.seed),
            ..defaults
        }
    }

    pub fn csv_path(&self) -> Option<&Path> {
        self.flags.csv.as_deref()
    }

    pub fn json_path(&self) -> Option<&Path> {
        self.flags.json.as_deref()
    }
}

use std::fmt;
use std::fs;
use std::path::Path;

use manifold_admm::solver::{SolverConfig, Variant};
use manifold_admm::Error;
use serde::Deserialize;

use crate::args::RunArgs;

#[derive(Debug)]
pub enum CliError {
    /// Bad files, flags or instance data.
    Input(String),
    /// Strict mode and parameters outside the feasible region.
    Infeasible(String),
    /// The solver failed or a trace check did not hold.
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Run(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible parameters: {m}"),
            CliError::Run(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InfeasibleParameters(m) => CliError::Infeasible(m),
            Error::LineSearchFailed { .. } | Error::DegenerateRetraction | Error::NonFinite(_) | Error::MissingHistory(_) => {
                CliError::Run(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub variant: Option<String>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub sigma_h: Option<f64>,
    pub eps: Option<f64>,
    pub iters: Option<usize>,
    pub batch: Option<usize>,
    pub seed: Option<u64>,
    pub strict_params: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}

/// Per-command fallbacks.
#[derive(Debug, Clone, Copy)]
pub struct Defaults {
    pub variant: Variant,
    pub iters: usize,
    pub eps: f64,
    pub seeds: (u64, u64),
}

/// Flags merged over the config file and the command defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub variant: Variant,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub sigma_h: Option<f64>,
    pub eps: f64,
    pub iters: usize,
    pub batch: usize,
    pub seeds: Vec<u64>,
    pub strict: bool,
    pub lipschitz: Option<f64>,
}

impl Settings {
    pub fn resolve(args: &RunArgs, defaults: Defaults) -> CliResult<Self> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let variant = match args.variant.as_ref().or(file.variant.as_ref()) {
            Some(v) => v.parse::<Variant>()?,
            None => defaults.variant,
        };
        let seeds = match (args.seeds, args.seed, file.seed) {
            (Some((a, b)), _, _) => (a..b).collect(),
            (None, Some(s), _) | (None, None, Some(s)) => vec![s],
            (None, None, None) => (defaults.seeds.0..defaults.seeds.1).collect(),
        };
        let s = Self {
            variant,
            beta: args.beta.or(file.beta),
            gamma: args.gamma.or(file.gamma),
            sigma_h: args.sigma_h.or(file.sigma_h),
            eps: args.eps.or(file.eps).unwrap_or(defaults.eps),
            iters: args.iters.or(file.iters).unwrap_or(defaults.iters),
            batch: args.batch.or(file.batch).unwrap_or(1),
            seeds,
            strict: args.strict || file.strict_params.unwrap_or(false),
            lipschitz: args.lipschitz,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> CliResult<()> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::Input(format!("{name} must be positive, got {x}"))),
            _ => Ok(()),
        };
        positive("beta", self.beta)?;
        positive("gamma", self.gamma)?;
        positive("sigma_h", self.sigma_h)?;
        positive("lipschitz", self.lipschitz)?;
        if !(self.eps >= 0.0) {
            return Err(CliError::Input(format!("eps must be nonnegative, got {}", self.eps)));
        }
        if self.iters == 0 {
            return Err(CliError::Input("iters must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(CliError::Input("batch must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies the explicit overrides to a config carrying derived defaults.
    pub fn apply(&self, mut cfg: SolverConfig) -> SolverConfig {
        if let Some(b) = self.beta {
            cfg.params.beta = b;
        }
        if let Some(g) = self.gamma {
            cfg.params.gamma = g;
        }
        if let Some(s) = self.sigma_h {
            cfg.params.sigma_h = s;
        }
        cfg.eps = self.eps;
        cfg.max_iters = self.iters;
        cfg.batch = self.batch;
        cfg.strict = self.strict;
        cfg
    }
}

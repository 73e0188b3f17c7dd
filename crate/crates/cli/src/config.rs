//! Experiment configuration files (TOML).
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//!
//! [law]
//! kind = "gem"
//! theta = 1.0
//!
//! [occupancy]
//! n = 1000
//! depth = 2
//!
//! [verify]
//! n_schedule = [100000, 1000000000]
//! replicates = 2000
//! ```
//!
//! An optional `[limit]` table declares the limit constants directly
//! (`omega`, `gamma_exp`, `c`, `a`, `base = { kind = ..., q = ... }`);
//! otherwise they are derived from the law.

use std::path::Path;

use nested_occupancy::limits::LimitSpec;
use nested_occupancy::occupancy::default_grid;
use nested_occupancy::verify::{ExperimentConfig, ToleranceProfile};
use nested_occupancy::{limit_spec_for, CountMode, Executor, FragmentationLaw, OccupancyConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub law: LawConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitSpec>,
    pub occupancy: OccupancySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    Gem { theta: f64 },
    Beta { alpha: f64, beta: f64 },
    Constant { u: f64 },
    PitmanYor { alpha: f64, theta: f64 },
    /// Poisson–Kingman law of the gamma subordinator (PD(θ)).
    GammaPk { theta: f64 },
    GammaSubordinator { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancySection {
    /// Ball count for `simulate`; `verify` takes its counts from `n_schedule`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default = "one")]
    pub depth: usize,
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    #[serde(default)]
    pub mode: CountMode,
    #[serde(default = "default_cap")]
    pub error_budget_cap: f64,
    /// Independent replicates written by `simulate`.
    #[serde(default = "one")]
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub n_schedule: Vec<u64>,
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<(usize, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<(usize, f64)>>,
    #[serde(default)]
    pub tolerance: ToleranceProfile,
}

fn one() -> usize {
    1
}

fn default_cap() -> f64 {
    1e-3
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn law(&self) -> Result<FragmentationLaw, CliError> {
        let law = match self.law {
            LawConfig::Gem { theta } => FragmentationLaw::gem(theta),
            LawConfig::Beta { alpha, beta } => FragmentationLaw::beta_stick(alpha, beta),
            LawConfig::Constant { u } => FragmentationLaw::constant_stick(u),
            LawConfig::PitmanYor { alpha, theta } => FragmentationLaw::pitman_yor(alpha, theta),
            LawConfig::GammaPk { theta } => FragmentationLaw::gamma_poisson_kingman(theta),
            LawConfig::GammaSubordinator { lambda } => FragmentationLaw::gamma_subordinator(lambda),
        }?;
        law.validate()?;
        Ok(match self.limit {
            Some(spec) => law.with_declared_limit(spec),
            None => law,
        })
    }

    pub fn occupancy(&self, n: u64) -> Result<OccupancyConfig, CliError> {
        let o = &self.occupancy;
        let cfg = OccupancyConfig {
            n,
            depth: o.depth,
            s_grid: o.grid.clone(),
            mode: o.mode,
            error_budget_cap: o.error_budget_cap,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn experiment(&self, executor: Executor) -> Result<ExperimentConfig, CliError> {
        let v = self
            .verify
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [verify] section".into()))?;
        let law = self.law()?;
        let spec = limit_spec_for(&law)?;
        let last = *v
            .n_schedule
            .last()
            .ok_or_else(|| CliError::Config("verify.n_schedule must not be empty".into()))?;
        let mut exp = ExperimentConfig::new(law, spec, self.occupancy(last)?, v.n_schedule.clone(), v.replicates, self.seed);
        if let Some(cells) = &v.cells {
            exp.cells = cells.clone();
            exp.marginals = cells.clone();
        }
        if let Some(marginals) = &v.marginals {
            exp.marginals = marginals.clone();
        }
        exp.tolerance = v.tolerance;
        exp.executor = executor;
        exp.validate()?;
        Ok(exp)
    }
}

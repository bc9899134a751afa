//! Experiment configuration files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ptree_core::{PriorSchedule, TruncationKind, TruncationPolicy};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::zoo::ZooDensity;

/// The only schema version this build reads.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that redirects all experiment output.
pub const OUTPUT_DIR_ENV: &str = "PTREE_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    EntropyConvergence,
    TvConvergence,
    ImpactLevel,
    SpacingLaw,
    BetaMoments,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        Self::EntropyConvergence,
        Self::TvConvergence,
        Self::ImpactLevel,
        Self::SpacingLaw,
        Self::BetaMoments,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::EntropyConvergence => "entropy-convergence",
            Self::TvConvergence => "tv-convergence",
            Self::ImpactLevel => "impact-level",
            Self::SpacingLaw => "spacing-law",
            Self::BetaMoments => "beta-moments",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| HarnessError::Usage(format!("unknown experiment kind '{s}'")))
    }
}

/// Seeds as an explicit list or as a contiguous range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { first: u64, count: u64 },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { first, count } => (*first..first + count).collect(),
        }
    }
}

fn default_policy() -> String {
    "auto".into()
}

fn default_tail_tolerance() -> f64 {
    ptree_core::entropy::DEFAULT_TAIL_TOLERANCE
}

fn default_tv_grid_cap() -> u32 {
    16
}

fn default_beta_params() -> Vec<f64> {
    vec![1.0, 2.0, 5.0]
}

fn default_moment_orders() -> Vec<u32> {
    vec![1, 2, 3]
}

/// One experiment as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub density: Option<String>,
    #[serde(default)]
    pub prior: Option<String>,
    /// Sample sizes; for `beta-moments`, numbers of Beta draws.
    pub sample_sizes: Vec<u64>,
    pub seeds: SeedSpec,
    #[serde(default = "default_policy")]
    pub policy: String,
    #[serde(default = "default_tail_tolerance")]
    pub tail_tolerance: f64,
    /// Directory receiving the report files.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Deepest grid used for total variation.
    #[serde(default = "default_tv_grid_cap")]
    pub tv_grid_cap: u32,
    /// Symmetric Beta parameters for `beta-moments`.
    #[serde(default = "default_beta_params")]
    pub beta_params: Vec<f64>,
    /// Moment orders `j` for `beta-moments`.
    #[serde(default = "default_moment_orders")]
    pub moment_orders: Vec<u32>,
}

impl ExperimentConfig {
    /// A configuration with defaults for everything but the essentials.
    pub fn new(kind: ExperimentKind, density: &str, prior: &str, sample_sizes: Vec<u64>, seeds: SeedSpec) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            kind,
            density: Some(density.into()),
            prior: Some(prior.into()),
            sample_sizes,
            seeds,
            policy: default_policy(),
            tail_tolerance: default_tail_tolerance(),
            output: None,
            tv_grid_cap: default_tv_grid_cap(),
            beta_params: default_beta_params(),
            moment_orders: default_moment_orders(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return bad("sample_sizes must be non-empty and strictly increasing".into());
        }
        if self.sample_sizes[0] == 0 {
            return bad("sample sizes must be positive".into());
        }
        if self.seeds.seeds().is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.kind != ExperimentKind::BetaMoments {
            ZooDensity::by_name(self.density_name()?)?;
        }
        if matches!(self.kind, ExperimentKind::EntropyConvergence | ExperimentKind::TvConvergence | ExperimentKind::ImpactLevel) {
            self.prior_schedule()?;
            self.truncation_policy()?;
        }
        if self.kind == ExperimentKind::BetaMoments
            && (self.beta_params.iter().any(|&a| !(a >= 1.0)) || self.moment_orders.contains(&0))
        {
            return bad("beta-moments needs parameters a ≥ 1 and orders j ≥ 1".into());
        }
        Ok(())
    }

    pub fn density_name(&self) -> Result<&str> {
        self.density
            .as_deref()
            .ok_or_else(|| HarnessError::Config(format!("{} needs a density", self.kind)))
    }

    pub fn prior_schedule(&self) -> Result<PriorSchedule> {
        let text = self
            .prior
            .as_deref()
            .ok_or_else(|| HarnessError::Config(format!("{} needs a prior", self.kind)))?;
        text.parse().map_err(|e| HarnessError::Config(format!("{e}")))
    }

    pub fn truncation_policy(&self) -> Result<TruncationPolicy> {
        let kind: TruncationKind = self.policy.parse().map_err(|e| HarnessError::Config(format!("{e}")))?;
        if !(self.tail_tolerance > 0.0) {
            return Err(HarnessError::Config("tail_tolerance must be positive".into()));
        }
        Ok(TruncationPolicy::new(kind).with_tolerance(self.tail_tolerance))
    }

    /// Output directory: the environment override, then the config, then a
    /// directory named after the experiment.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            return PathBuf::from(dir);
        }
        self.output
            .clone()
            .unwrap_or_else(|| PathBuf::from("ptree-output").join(self.kind.as_str()))
    }
}

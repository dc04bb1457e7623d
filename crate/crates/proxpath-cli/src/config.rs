//! Declarative run configuration: an optional TOML file, overridden by
//! command-line flags, resolved into one struct that is echoed into every
//! output's sidecar.

use std::path::Path;

use proxpath::dgp::{bridge_maps, ScenarioSpec};
use proxpath::study::NuisanceMode;
use proxpath::{BridgeMaps, EstimatorTag, KernelConfig, LowRankOptions, Role};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub n: Option<usize>,
    pub n_mc: Option<usize>,
    pub estimators: Option<Vec<String>>,
    pub nuisance: Option<NuisanceMode>,
    pub folds: Option<usize>,
    pub bootstrap_b: Option<usize>,
    pub level: Option<f64>,
    pub effects: Option<bool>,
    pub scenarios: Option<Vec<u8>>,
    pub reps: Option<usize>,
    pub maps: Option<MapsChoice>,
    pub spec: Option<ScenarioSpec>,
    pub kernel: Option<KernelSection>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CliError::ConfigRead { path: path.display().to_string(), source })?;
        toml::from_str(&text).map_err(|source| CliError::ConfigParse { path: path.display().to_string(), source })
    }
}

/// Which linear maps the parametric bridges use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MapsChoice {
    /// Intercept plus the raw blocks.
    #[default]
    Linear,
    /// The exact maps of the configured synthetic design.
    Design,
}

impl MapsChoice {
    pub fn build(self, spec: &ScenarioSpec, has_covariates: bool) -> BridgeMaps {
        match self {
            MapsChoice::Design => bridge_maps(spec),
            MapsChoice::Linear if has_covariates => BridgeMaps::linear(),
            MapsChoice::Linear => BridgeMaps::linear_without_covariates(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub lambda_grid: Vec<f64>,
    pub cv_folds: usize,
    pub max_rank: usize,
    pub rank_tol: f64,
    pub bandwidth_scale: f64,
    /// Fixed bandwidths by block prefix, e.g. `{ W = 1.5 }`.
    pub bandwidths: std::collections::BTreeMap<String, f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        let k = KernelConfig::default();
        KernelSection {
            lambda_grid: k.lambda_grid,
            cv_folds: k.cv_folds,
            max_rank: k.lowrank.max_rank,
            rank_tol: k.lowrank.tol,
            bandwidth_scale: k.bandwidth_scale,
            bandwidths: Default::default(),
        }
    }
}

impl KernelSection {
    pub fn to_config(&self, seed: u64) -> CliResult<KernelConfig> {
        let overrides = self
            .bandwidths
            .iter()
            .map(|(k, &v)| {
                let role = k
                    .chars()
                    .next()
                    .and_then(Role::from_prefix)
                    .filter(|_| k.len() == 1)
                    .ok_or_else(|| CliError::Usage(format!("kernel.bandwidths: unknown block `{k}` (D, M, Z, W or X)")))?;
                Ok((role, v))
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(KernelConfig {
            lambda_grid: self.lambda_grid.clone(),
            cv_folds: self.cv_folds,
            lowrank: LowRankOptions { tol: self.rank_tol, max_rank: self.max_rank },
            bandwidth_overrides: overrides,
            bandwidth_scale: self.bandwidth_scale,
            seed,
        })
    }
}

/// Everything a command ran with.
#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub n: usize,
    pub n_mc: usize,
    pub estimators: Vec<EstimatorTag>,
    pub nuisance: NuisanceMode,
    pub folds: usize,
    pub bootstrap_b: usize,
    pub level: f64,
    pub effects: bool,
    pub scenarios: Vec<u8>,
    pub reps: usize,
    pub maps: MapsChoice,
    pub spec: ScenarioSpec,
    pub kernel: KernelSection,
}

pub fn parse_estimators(names: &[String]) -> CliResult<Vec<EstimatorTag>> {
    let mut out = Vec::new();
    for n in names.iter().flat_map(|s| s.split(',')).filter(|s| !s.trim().is_empty()) {
        let t: EstimatorTag = n.parse().map_err(|e: proxpath::Error| CliError::Usage(e.to_string()))?;
        if !out.contains(&t) {
            out.push(t);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no estimators requested".into()));
    }
    Ok(out)
}

pub fn positive(name: &str, v: usize) -> CliResult<usize> {
    if v == 0 {
        Err(CliError::Usage(format!("--{name} must be at least 1")))
    } else {
        Ok(v)
    }
}

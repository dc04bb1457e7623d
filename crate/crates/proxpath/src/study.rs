//! Monte Carlo study over misspecification scenarios.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::bootstrap;
use crate::bridge::{Bridge, BridgeKind, BridgeSet};
use crate::crossfit::{dml_estimate, kernel_fitter, parametric_fitter};
use crate::data::Dataset;
use crate::dgp::{bridge_maps, oracle, simulate, MisspecificationMode, OracleValues, ScenarioSpec};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorTag, Interval};
use crate::minimax::KernelConfig;
use crate::parametric::{fit_h_chain, fit_q_chain, BridgeMaps};
use crate::seeds::child_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NuisanceMode {
    #[default]
    Parametric,
    Kernel,
}

impl FromStr for NuisanceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "parametric" => Ok(NuisanceMode::Parametric),
            "kernel" => Ok(NuisanceMode::Kernel),
            other => Err(Error::Config(format!("unknown nuisance mode `{other}` (parametric | kernel)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub spec: ScenarioSpec,
    pub scenarios: Vec<u8>,
    pub n: usize,
    pub reps: usize,
    pub estimators: Vec<EstimatorTag>,
    pub nuisance: NuisanceMode,
    pub bootstrap_b: usize,
    pub level: f64,
    pub folds: usize,
    pub seed: u64,
    pub n_mc: usize,
    pub kernel: KernelConfig,
    /// Correctly specified maps to corrupt per scenario; defaults to the
    /// design's exact maps.
    pub maps: Option<BridgeMaps>,
    pub max_failure_rate: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            spec: ScenarioSpec::default(),
            scenarios: vec![1, 2, 3, 4, 5],
            n: 1000,
            reps: 1000,
            estimators: EstimatorTag::PLUGINS_AND_QUADR.to_vec(),
            nuisance: NuisanceMode::Parametric,
            bootstrap_b: 500,
            level: 0.95,
            folds: 5,
            seed: 20240101,
            n_mc: 1_000_000,
            kernel: KernelConfig::default(),
            maps: None,
            max_failure_rate: 0.05,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.scenarios.is_empty() || self.estimators.is_empty() {
            return Err(Error::Config("study needs at least one scenario and one estimator".into()));
        }
        for &s in &self.scenarios {
            MisspecificationMode::from_scenario(s)?;
        }
        if self.reps == 0 || self.n < 10 {
            return Err(Error::Config(format!("study needs reps ≥ 1 and n ≥ 10 (got {} and {})", self.reps, self.n)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("confidence level must lie in (0, 1), got {}", self.level)));
        }
        if self.nuisance == NuisanceMode::Kernel {
            if self.scenarios.iter().any(|&s| s != 1) {
                return Err(Error::Config(
                    "kernel nuisances have no misspecified variant; use --scenarios 1 with --nuisance kernel".into(),
                ));
            }
            if self.estimators.iter().any(|&t| t != EstimatorTag::Pdml) {
                return Err(Error::Config("kernel nuisances are only used by the cross-fitted estimator (dml)".into()));
            }
        }
        if self.estimators.iter().any(|&t| t != EstimatorTag::Pdml) && self.bootstrap_b < 2 {
            return Err(Error::Config("bootstrap intervals need --bootstrap-B ≥ 2".into()));
        }
        Ok(())
    }

    fn base_maps(&self) -> BridgeMaps {
        self.maps.clone().unwrap_or_else(|| bridge_maps(&self.spec))
    }
}

/// Estimators that stay consistent in a scenario (quadR and DML in all).
pub fn designated_consistent(scenario: u8, tag: EstimatorTag) -> bool {
    use EstimatorTag::*;
    matches!(
        (scenario, tag),
        (_, Pquadr | Pdml) | (1, _) | (2, Por) | (3, Pipw) | (4, Phybrid1) | (5, Phybrid2)
    )
}

/// Fits only the chains the requested estimators read and evaluates each.
pub fn parametric_estimates(ds: &Dataset<f64>, maps: &BridgeMaps, tags: &[EstimatorTag]) -> Result<Vec<f64>> {
    let needs = |pred: fn(&BridgeKind) -> bool| tags.iter().any(|t| t.needs().iter().any(pred));
    let mut bs = BridgeSet::default();
    if needs(|k| matches!(k, BridgeKind::H2 | BridgeKind::H1 | BridgeKind::H0)) {
        for st in fit_h_chain(ds, maps)?.stages {
            bs.insert(Bridge::Linear(st.bridge));
        }
    }
    if needs(|k| matches!(k, BridgeKind::Q0 | BridgeKind::Q1 | BridgeKind::Q2)) {
        for st in fit_q_chain(ds, maps)?.stages {
            bs.insert(Bridge::Linear(st.bridge));
        }
    }
    tags.iter().map(|&t| estimate(t, ds, &bs)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateResult {
    pub scenario: u8,
    pub rep: usize,
    pub estimates: Vec<(EstimatorTag, f64, Option<Interval>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub scenario: u8,
    pub rep: usize,
    pub message: String,
}

const BOOT_TAG: u64 = 0xB007;
const FOLD_TAG: u64 = 0xF01D;
const ORACLE_TAG: u64 = 0x0AC1E;

/// Seed of replicate `rep`'s dataset. Datasets are shared across scenarios,
/// which differ only in the fitted maps.
pub fn replicate_seed(root: u64, rep: usize) -> u64 {
    child_seed(root, rep as u64)
}

/// Runs one replicate of one scenario.
pub fn run_replicate(cfg: &StudyConfig, scenario: u8, rep: usize) -> Result<ReplicateResult> {
    let data_seed = replicate_seed(cfg.seed, rep);
    let ds = simulate(&cfg.spec, cfg.n, data_seed)?;
    let mode = MisspecificationMode::from_scenario(scenario)?;
    let maps = cfg.base_maps().misspecified(mode);

    let (plain, dml): (Vec<EstimatorTag>, Vec<EstimatorTag>) =
        cfg.estimators.iter().partition(|&&t| t != EstimatorTag::Pdml);
    let mut estimates = Vec::with_capacity(cfg.estimators.len());

    if !plain.is_empty() {
        let points = parametric_estimates(&ds, &maps, &plain)?;
        let est = |d: &Dataset<f64>| parametric_estimates(d, &maps, &plain);
        let boots = bootstrap(&ds, cfg.bootstrap_b, child_seed(data_seed, BOOT_TAG), cfg.level, &est)?;
        for ((t, p), b) in plain.iter().zip(points).zip(boots) {
            estimates.push((*t, p, Some(b.ci)));
        }
    }
    if !dml.is_empty() {
        let fold_seed = child_seed(data_seed, FOLD_TAG);
        let rep = match cfg.nuisance {
            NuisanceMode::Kernel => {
                let mut kc = cfg.kernel.clone();
                kc.seed = child_seed(data_seed, kc.seed);
                let f = kernel_fitter::<f64>(kc, false);
                dml_estimate(&ds, cfg.folds, &f, fold_seed, cfg.level)?
            }
            NuisanceMode::Parametric => {
                let f = parametric_fitter::<f64>(maps.clone(), false);
                dml_estimate(&ds, cfg.folds, &f, fold_seed, cfg.level)?
            }
        };
        estimates.push((EstimatorTag::Pdml, rep.psi_hat, rep.ci));
    }
    Ok(ReplicateResult { scenario, rep, estimates })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub scenario: u8,
    pub estimator: EstimatorTag,
    pub bias: f64,
    pub mse: f64,
    pub coverage: f64,
    pub mean_length: f64,
    pub mc_sd: f64,
    pub reps: usize,
    pub designated: bool,
}

impl Cell {
    fn from_draws(scenario: u8, tag: EstimatorTag, psi: f64, draws: &[(f64, Option<Interval>)]) -> Cell {
        let r = draws.len() as f64;
        let mean = draws.iter().map(|d| d.0).sum::<f64>() / r;
        let mse = draws.iter().map(|d| (d.0 - psi).powi(2)).sum::<f64>() / r;
        let sd = if draws.len() > 1 {
            (draws.iter().map(|d| (d.0 - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
        } else {
            f64::NAN
        };
        let cis: Vec<Interval> = draws.iter().filter_map(|d| d.1).collect();
        let (coverage, mean_length) = if cis.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let k = cis.len() as f64;
            (
                cis.iter().filter(|c| c.contains(psi)).count() as f64 / k,
                cis.iter().map(Interval::length).sum::<f64>() / k,
            )
        };
        Cell {
            scenario,
            estimator: tag,
            bias: mean - psi,
            mse,
            coverage,
            mean_length,
            mc_sd: sd,
            reps: draws.len(),
            designated: designated_consistent(scenario, tag),
        }
    }
}

type Panel = (&'static str, fn(&Cell) -> f64);

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub n: usize,
    pub reps: usize,
    pub oracle: OracleValues,
    pub cells: Vec<Cell>,
    pub failures: Vec<Failure>,
    pub replicates: Vec<ReplicateResult>,
}

impl MetricsTable {
    pub fn cell(&self, scenario: u8, tag: EstimatorTag) -> Option<&Cell> {
        self.cells.iter().find(|c| c.scenario == scenario && c.estimator == tag)
    }

    pub fn scenarios(&self) -> Vec<u8> {
        let mut s: Vec<u8> = self.cells.iter().map(|c| c.scenario).collect();
        s.dedup();
        s
    }

    fn estimators(&self) -> Vec<EstimatorTag> {
        let mut t: Vec<EstimatorTag> = Vec::new();
        for c in &self.cells {
            if !t.contains(&c.estimator) {
                t.push(c.estimator);
            }
        }
        t
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["scenario", "estimator", "psi_true", "bias", "mse", "coverage", "mean_length", "mc_sd", "reps", "designated"])?;
        for c in &self.cells {
            wr.write_record([
                c.scenario.to_string(),
                c.estimator.to_string(),
                self.oracle.psi.to_string(),
                c.bias.to_string(),
                c.mse.to_string(),
                c.coverage.to_string(),
                c.mean_length.to_string(),
                c.mc_sd.to_string(),
                c.reps.to_string(),
                c.designated.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Four panels (bias, MSE, coverage, interval length); rows are
    /// scenarios, columns estimators, `*` marks designated-consistent cells.
    pub fn render_text(&self) -> String {
        let tags = self.estimators();
        let mut out = String::new();
        let _ = writeln!(out, "n = {}, replicates = {}, ψ = {:.5} (± {:.1e})", self.n, self.reps, self.oracle.psi, self.oracle.psi_se);
        let panels: [Panel; 4] = [
            ("bias", |c| c.bias),
            ("MSE", |c| c.mse),
            ("coverage", |c| c.coverage),
            ("CI length", |c| c.mean_length),
        ];
        for (name, get) in panels {
            let _ = writeln!(out, "\n{name}");
            let _ = write!(out, "{:<10}", "scenario");
            for t in &tags {
                let _ = write!(out, "{:>13}", t.to_string());
            }
            let _ = writeln!(out);
            for s in self.scenarios() {
                let _ = write!(out, "{:<10}", s);
                for t in &tags {
                    match self.cell(s, *t) {
                        Some(c) => {
                            let mark = if c.designated { "*" } else { " " };
                            let _ = write!(out, "{:>12.4}{mark}", get(c));
                        }
                        None => {
                            let _ = write!(out, "{:>13}", "-");
                        }
                    }
                }
                let _ = writeln!(out);
            }
        }
        if !self.failures.is_empty() {
            let _ = writeln!(out, "\n{} failed replicate(s)", self.failures.len());
        }
        out
    }
}

/// Runs every scenario; replicates run on the current rayon pool.
pub fn run_study(cfg: &StudyConfig) -> Result<MetricsTable> {
    cfg.validate()?;
    let orc = oracle(&cfg.spec, cfg.n_mc, child_seed(cfg.seed, ORACLE_TAG))?;
    info!("oracle ψ = {:.5} (MC se {:.1e})", orc.psi, orc.psi_se);
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    let mut replicates = Vec::new();
    for &s in &cfg.scenarios {
        let results: Vec<Result<ReplicateResult>> =
            (0..cfg.reps).into_par_iter().map(|r| run_replicate(cfg, s, r)).collect();
        let mut ok = Vec::new();
        for (r, res) in results.into_iter().enumerate() {
            match res {
                Ok(v) => ok.push(v),
                Err(e) => {
                    warn!("scenario {s}, replicate {r}: {e}");
                    failures.push(Failure { scenario: s, rep: r, message: e.to_string() });
                }
            }
        }
        let failed = cfg.reps - ok.len();
        if failed as f64 > cfg.max_failure_rate * cfg.reps as f64 {
            return Err(Error::Estimation(format!(
                "scenario {s}: {failed} of {} replicates failed (limit {:.0}%)",
                cfg.reps,
                100.0 * cfg.max_failure_rate
            )));
        }
        for &t in &cfg.estimators {
            let draws: Vec<(f64, Option<Interval>)> = ok
                .iter()
                .filter_map(|r| r.estimates.iter().find(|e| e.0 == t).map(|e| (e.1, e.2)))
                .collect();
            if !draws.is_empty() {
                cells.push(Cell::from_draws(s, t, orc.psi, &draws));
            }
        }
        info!("scenario {s} done ({} ok, {failed} failed)", ok.len());
        replicates.extend(ok);
    }
    Ok(MetricsTable { n: cfg.n, reps: cfg.reps, oracle: orc, cells, failures, replicates })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn designation_table() {
        use EstimatorTag::*;
        assert!(designated_consistent(1, Pipw));
        assert!(designated_consistent(3, Pipw));
        assert!(!designated_consistent(3, Por));
        assert!(designated_consistent(5, Pquadr));
        assert!(!designated_consistent(4, Phybrid2));
    }

    #[test]
    fn kernel_mode_rejects_misspecified_scenarios() {
        let cfg = StudyConfig {
            nuisance: NuisanceMode::Kernel,
            estimators: vec![EstimatorTag::Pdml],
            scenarios: vec![1, 2],
            ..StudyConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}

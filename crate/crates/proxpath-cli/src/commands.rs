use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use proxpath::bootstrap::bootstrap;
use proxpath::crossfit::{dml_effects, dml_estimate, kernel_fitter, parametric_fitter, Fitter};
use proxpath::dgp::{oracle, simulate as draw, OracleValues};
use proxpath::estimators::{effects, fit_parametric_bridges};
use proxpath::minimax::fit_all_bridges_kernel;
use proxpath::seeds::child_seed;
use proxpath::study::{parametric_estimates, run_study, NuisanceMode, StudyConfig};
use proxpath::{
    load_csv, BridgeSet64, Dataset64, EstimateReport, EstimatorTag, OutcomeKind, Role, ScenarioSpec,
};
use serde::Serialize;

use crate::config::{parse_estimators, positive, FileConfig, MapsChoice, Resolved};
use crate::error::{CliError, CliResult};
use crate::report::{self, effect_rows, Row};
use crate::{EstimationFlags, Shared};

const DEFAULT_SEED: u64 = 1;

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a Resolved,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleValues>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    notes: BTreeMap<String, String>,
}

fn write_meta(out: &Path, cfg: &Resolved, oracle: Option<OracleValues>, notes: BTreeMap<String, String>) -> CliResult<()> {
    let meta = Meta { tool: "proxpath", version: env!("CARGO_PKG_VERSION"), config: cfg, oracle, notes };
    report::write(&report::sidecar(out, ".meta.toml"), &toml::to_string(&meta)?)
}

fn resolve(command: &str, shared: &Shared, est: Option<&EstimationFlags>) -> CliResult<Resolved> {
    let file = match &shared.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let threads = shared
        .threads
        .or(file.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut estimators = match &file.estimators {
        Some(names) => parse_estimators(names)?,
        None => EstimatorTag::PLUGINS_AND_QUADR.to_vec(),
    };
    let mut r = Resolved {
        command: command.to_string(),
        seed: shared.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        threads: positive("threads", threads)?,
        n: file.n.unwrap_or(1000),
        n_mc: file.n_mc.unwrap_or(1_000_000),
        estimators: Vec::new(),
        nuisance: file.nuisance.unwrap_or_default(),
        folds: file.folds.unwrap_or(5),
        bootstrap_b: file.bootstrap_b.unwrap_or(500),
        level: file.level.unwrap_or(0.95),
        effects: file.effects.unwrap_or(false),
        scenarios: file.scenarios.clone().unwrap_or_else(|| vec![1, 2, 3, 4, 5]),
        reps: file.reps.unwrap_or(500),
        maps: file.maps.unwrap_or_default(),
        spec: file.spec.unwrap_or_default(),
        kernel: file.kernel.clone().unwrap_or_default(),
    };
    if let Some(e) = est {
        if !e.estimators.is_empty() {
            estimators = e.estimators.clone();
            estimators.dedup();
        }
        r.nuisance = e.nuisance.unwrap_or(r.nuisance);
        r.folds = e.folds.unwrap_or(r.folds);
        r.bootstrap_b = e.bootstrap_b.unwrap_or(r.bootstrap_b);
        r.level = e.level.unwrap_or(r.level);
        r.effects |= e.effects;
        r.maps = e.maps.unwrap_or(r.maps);
    }
    r.estimators = estimators;
    if !(r.level > 0.0 && r.level < 1.0) {
        return Err(CliError::Usage(format!("--level must lie in (0, 1), got {}", r.level)));
    }
    Ok(r)
}

fn pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a PathBuf> {
    p.as_ref().ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

pub fn simulate(shared: &Shared, n: Option<usize>, n_mc: Option<usize>, binary: bool) -> CliResult<()> {
    let mut cfg = resolve("simulate", shared, None)?;
    cfg.n = positive("n", n.unwrap_or(cfg.n))?;
    cfg.n_mc = positive("n-mc", n_mc.unwrap_or(cfg.n_mc))?;
    if binary {
        cfg.spec = ScenarioSpec::binary_default();
    }
    let out = require(&shared.out, "out")?;
    let ds = draw(&cfg.spec, cfg.n, cfg.seed)?;
    ds.save_csv(out)?;
    let orc = pool(cfg.threads)?.install(|| oracle(&cfg.spec, cfg.n_mc, child_seed(cfg.seed, 0x0AC1E)))?;
    write_meta(out, &cfg, Some(orc), BTreeMap::new())?;
    info!("wrote {} rows to {}", ds.n(), out.display());
    Ok(())
}

fn load(shared: &Shared) -> CliResult<Dataset64> {
    let input = require(&shared.input, "in")?;
    Ok(load_csv(input, None)?)
}

fn kernel_cfg(cfg: &Resolved) -> CliResult<proxpath::KernelConfig> {
    cfg.kernel.to_config(child_seed(cfg.seed, 0xCF))
}

pub fn fit_bridges(shared: &Shared, nuisance: Option<NuisanceMode>, maps: Option<MapsChoice>) -> CliResult<()> {
    let mut cfg = resolve("fit-bridges", shared, None)?;
    cfg.nuisance = nuisance.unwrap_or(cfg.nuisance);
    cfg.maps = maps.unwrap_or(cfg.maps);
    let ds = load(shared)?;
    let out = require(&shared.out, "out")?;
    let mut notes = BTreeMap::new();
    let bridges: BridgeSet64 = match cfg.nuisance {
        NuisanceMode::Parametric => {
            let m = cfg.maps.build(&cfg.spec, ds.schema().dim(Role::X) > 0);
            fit_parametric_bridges(&ds, &m, true)?
        }
        NuisanceMode::Kernel => {
            let kc = kernel_cfg(&cfg)?;
            let fits = pool(cfg.threads)?.install(|| fit_all_bridges_kernel(&ds, &kc, true))?;
            for s in &fits.selections {
                notes.insert(
                    format!("selection_{}", s.kind),
                    format!("lambda_h={:e} lambda_f={:e} cv={:.6e} rank_h={} rank_f={}", s.lambda_h, s.lambda_f, s.criterion, s.rank_h, s.rank_f),
                );
            }
            fits.bridges
        }
    };
    let text: String = bridges.iter().map(|b| format!("{b}\n")).collect();
    report::write(out, &text)?;
    write_meta(out, &cfg, None, notes)?;
    Ok(())
}

pub fn estimate(shared: &Shared, est: &EstimationFlags) -> CliResult<()> {
    let cfg = resolve("estimate", shared, Some(est))?;
    let ds = load(shared)?;
    let outcome = if ds.outcome_is_binary() { OutcomeKind::Binary } else { OutcomeKind::Continuous };
    let maps = cfg.maps.build(&cfg.spec, ds.schema().dim(Role::X) > 0);
    let kc = kernel_cfg(&cfg)?;
    let rows = pool(cfg.threads)?.install(|| -> CliResult<Vec<Row>> {
        let fitter: Box<Fitter<'_, f64>> = match cfg.nuisance {
            NuisanceMode::Parametric => Box::new(parametric_fitter(maps.clone(), cfg.effects)),
            NuisanceMode::Kernel => Box::new(kernel_fitter(kc.clone(), cfg.effects)),
        };
        let mut rows = Vec::new();
        let plain: Vec<EstimatorTag> = cfg.estimators.iter().copied().filter(|&t| t != EstimatorTag::Pdml).collect();
        if !plain.is_empty() {
            let est_fn = |d: &Dataset64| -> proxpath::Result<Vec<f64>> {
                match cfg.nuisance {
                    NuisanceMode::Parametric => parametric_estimates(d, &maps, &plain),
                    NuisanceMode::Kernel => {
                        let bs = fitter(d)?;
                        plain.iter().map(|&t| proxpath::estimators::estimate(t, d, &bs)).collect()
                    }
                }
            };
            if cfg.nuisance == NuisanceMode::Kernel && cfg.bootstrap_b > 0 {
                warn!("bootstrap with kernel nuisances refits every bridge {} times", cfg.bootstrap_b);
            }
            let points = est_fn(&ds)?;
            let boots = if cfg.bootstrap_b > 0 {
                Some(bootstrap(&ds, cfg.bootstrap_b, child_seed(cfg.seed, 0xB007), cfg.level, &est_fn)?)
            } else {
                None
            };
            for (k, (&t, p)) in plain.iter().zip(points).enumerate() {
                let mut r = EstimateReport::point(t, p);
                if let Some(b) = &boots {
                    r.se = Some(b[k].se);
                    r.ci = Some(b[k].ci);
                }
                rows.push(Row::from_estimate(&r, if boots.is_some() { "bootstrap" } else { "point" }));
            }
        }
        let dml = cfg.estimators.contains(&EstimatorTag::Pdml);
        let fold_seed = child_seed(cfg.seed, 0xF01D);
        if dml && cfg.effects {
            let (r, e) = dml_effects(&ds, cfg.folds, &*fitter, fold_seed, cfg.level, outcome)?;
            rows.push(Row::from_estimate(&r, "cross-fit Wald"));
            rows.extend(effect_rows(&e, cfg.level, "cross-fit Wald")?);
        } else {
            if dml {
                let r = dml_estimate(&ds, cfg.folds, &*fitter, fold_seed, cfg.level)?;
                rows.push(Row::from_estimate(&r, "cross-fit Wald"));
            }
            if cfg.effects {
                let bs = fitter(&ds)?;
                let e = effects(&ds, &bs, outcome)?;
                rows.extend(effect_rows(&e, cfg.level, "influence Wald")?);
            }
        }
        Ok(rows)
    })?;

    let text = report::to_text(&rows);
    print!("{text}");
    if let Some(out) = &shared.out {
        report::write(out, &report::to_csv(&rows))?;
        report::write(&report::sidecar(out, ".txt"), &text)?;
        write_meta(out, &cfg, None, BTreeMap::new())?;
    }
    Ok(())
}

pub fn study(
    shared: &Shared,
    est: &EstimationFlags,
    scenarios: Vec<u8>,
    reps: Option<usize>,
    n: Option<usize>,
    n_mc: Option<usize>,
) -> CliResult<()> {
    let mut cfg = resolve("study", shared, Some(est))?;
    if !scenarios.is_empty() {
        cfg.scenarios = scenarios;
    }
    cfg.reps = positive("reps", reps.unwrap_or(cfg.reps))?;
    cfg.n = positive("n", n.unwrap_or(cfg.n))?;
    cfg.n_mc = positive("n-mc", n_mc.unwrap_or(cfg.n_mc))?;
    cfg.maps = MapsChoice::Design;
    if cfg.nuisance == NuisanceMode::Kernel && est.estimators.is_empty() {
        cfg.estimators = vec![EstimatorTag::Pdml];
    }
    let sc = StudyConfig {
        spec: cfg.spec,
        scenarios: cfg.scenarios.clone(),
        n: cfg.n,
        reps: cfg.reps,
        estimators: cfg.estimators.clone(),
        nuisance: cfg.nuisance,
        bootstrap_b: cfg.bootstrap_b,
        level: cfg.level,
        folds: cfg.folds,
        seed: cfg.seed,
        n_mc: cfg.n_mc,
        kernel: kernel_cfg(&cfg)?,
        maps: None,
        ..StudyConfig::default()
    };
    sc.validate().map_err(|e| match e {
        proxpath::Error::Config(m) => CliError::Usage(m),
        other => other.into(),
    })?;
    let table = pool(cfg.threads)?.install(|| run_study(&sc))?;
    let text = table.render_text();
    print!("{text}");
    if let Some(out) = &shared.out {
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        report::write(out, &String::from_utf8_lossy(&buf))?;
        report::write(&report::sidecar(out, ".txt"), &text)?;
        let mut notes = BTreeMap::new();
        for f in &table.failures {
            notes.insert(format!("failure_s{}_r{}", f.scenario, f.rep), f.message.clone());
        }
        write_meta(out, &cfg, Some(table.oracle), notes)?;
    }
    Ok(())
}

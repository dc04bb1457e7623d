use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use proxpath::{EffectReport, EstimateReport, Interval};
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub quantity: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci: Option<Interval>,
    pub method: String,
}

impl Row {
    pub fn from_estimate(r: &EstimateReport, method: &str) -> Row {
        Row { quantity: r.tag.to_string(), estimate: r.psi_hat, se: r.se, ci: r.ci, method: method.to_string() }
    }
}

/// Rows for E[Y(1)], P_AMY and (binary outcomes) R_AMY with Wald intervals.
pub fn effect_rows(e: &EffectReport, level: f64, method: &str) -> CliResult<Vec<Row>> {
    let wald = |est: f64, se: f64| proxpath::crossfit::wald(est, se, level).map_err(CliError::from);
    let mut rows = vec![
        Row { quantity: "E[Y(1)]".into(), estimate: e.ey1, se: Some(e.ey1_se), ci: Some(wald(e.ey1, e.ey1_se)?), method: method.into() },
        Row { quantity: "P_AMY".into(), estimate: e.pamy, se: Some(e.pamy_se), ci: Some(wald(e.pamy, e.pamy_se)?), method: method.into() },
    ];
    if let (Some(r), Some(se)) = (e.ramy, e.ramy_se) {
        rows.push(Row { quantity: "R_AMY".into(), estimate: r, se: Some(se), ci: Some(wald(r, se)?), method: method.into() });
    }
    Ok(rows)
}

pub fn to_csv(rows: &[Row]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    let mut out = String::from("quantity,estimate,se,ci_lo,ci_hi,level,method\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.quantity,
            r.estimate,
            opt(r.se),
            opt(r.ci.map(|c| c.lo)),
            opt(r.ci.map(|c| c.hi)),
            opt(r.ci.map(|c| c.level)),
            r.method
        );
    }
    out
}

pub fn to_text(rows: &[Row]) -> String {
    let mut out = format!("{:<10} {:>11} {:>10} {:>24}  {}\n", "quantity", "estimate", "se", "interval", "method");
    for r in rows {
        let se = r.se.map_or("-".to_string(), |s| format!("{s:.4}"));
        let ci = r.ci.map_or("-".to_string(), |c| format!("[{:.4}, {:.4}]", c.lo, c.hi));
        let _ = writeln!(out, "{:<10} {:>11.4} {:>10} {:>24}  {}", r.quantity, r.estimate, se, ci, r.method);
    }
    out
}

pub fn write(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Write { path: path.display().to_string(), source })
}

pub fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

//! Cross-fitting: nuisances trained on the complement of each fold,
//! influence expressions evaluated on the fold.

use log::debug;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bridge::{BridgeKind, BridgeSet};
use crate::data::Dataset;
use crate::dgp::OutcomeKind;
use crate::error::{Error, Result, StageExt};
use crate::estimators::{
    ey1_rows, eif_values, fit_parametric_bridges, EffectReport, EstimateReport, EstimatorTag, Interval,
};
use crate::minimax::{fit_all_bridges_kernel, KernelConfig};
use crate::parametric::BridgeMaps;
use crate::scalar::Scalar;
use crate::seeds::{child_seed, stream_rng};

/// Anything that turns a training sample into a bridge set.
pub type Fitter<'a, T> = dyn Fn(&Dataset<T>) -> Result<BridgeSet<T>> + Sync + 'a;

/// Attempts at re-drawing the partition when a training complement lacks a
/// treatment arm.
pub const MAX_RESEEDS: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
    /// Seed the partition was actually drawn with.
    pub seed: u64,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Indices outside fold `k`, ascending.
    pub fn complement(&self, k: usize) -> Vec<usize> {
        let mut v: Vec<usize> =
            self.folds.iter().enumerate().filter(|(j, _)| *j != k).flat_map(|(_, f)| f.iter().copied()).collect();
        v.sort_unstable();
        v
    }
}

/// Random partition of 0..n into `l` folds. The first `n mod l` folds hold
/// ⌈n/l⌉ indices, the rest ⌊n/l⌋.
pub fn make_folds(n: usize, l: usize, seed: u64) -> Result<FoldPlan> {
    if l < 2 {
        return Err(Error::Config(format!("cross-fitting needs at least 2 folds, got {l}")));
    }
    if n < l {
        return Err(Error::Config(format!("{n} observations cannot fill {l} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, 0));
    let (base, extra) = (n / l, n % l);
    let mut folds = Vec::with_capacity(l);
    let mut start = 0;
    for k in 0..l {
        let size = base + usize::from(k < extra);
        let mut f = idx[start..start + size].to_vec();
        f.sort_unstable();
        folds.push(f);
        start += size;
    }
    Ok(FoldPlan { folds, seed })
}

fn plan_with_arms<T: Scalar>(ds: &Dataset<T>, l: usize, seed: u64) -> Result<FoldPlan> {
    for attempt in 0..=MAX_RESEEDS {
        let s = if attempt == 0 { seed } else { child_seed(seed, attempt as u64) };
        let plan = make_folds(ds.n(), l, s)?;
        let ok = (0..l).all(|k| {
            let c = plan.complement(k);
            let t = c.iter().filter(|&&i| ds.a()[i] == 1).count();
            t > 0 && t < c.len()
        });
        if ok {
            if attempt > 0 {
                debug!("fold partition redrawn {attempt} time(s) to keep both arms in every training set");
            }
            return Ok(plan);
        }
    }
    Err(Error::Estimation(format!(
        "no partition into {l} folds with both arms in every training set after {MAX_RESEEDS} redraws"
    )))
}

/// Per-row cross-fitted values in the original row order.
#[derive(Clone, Debug)]
pub struct CrossFitOutput {
    pub plan: FoldPlan,
    /// Uncentered EIF of ψ.
    pub psi_rows: Vec<f64>,
    /// A q₀ (Y − h̃) + h̃, when requested.
    pub ey1_rows: Option<Vec<f64>>,
}

impl CrossFitOutput {
    fn fold_means(&self, rows: &[f64]) -> Vec<f64> {
        self.plan.folds.iter().map(|f| f.iter().map(|&i| rows[i]).sum::<f64>() / f.len() as f64).collect()
    }

    /// ψ̂ as the average of the per-fold means.
    pub fn psi(&self) -> f64 {
        let m = self.fold_means(&self.psi_rows);
        m.iter().sum::<f64>() / m.len() as f64
    }

    pub fn ey1(&self) -> Option<f64> {
        self.ey1_rows.as_ref().map(|r| {
            let m = self.fold_means(r);
            m.iter().sum::<f64>() / m.len() as f64
        })
    }
}

pub fn crossfit<T: Scalar>(
    ds: &Dataset<T>,
    l: usize,
    fitter: &Fitter<'_, T>,
    seed: u64,
    with_ey1: bool,
) -> Result<CrossFitOutput> {
    let plan = plan_with_arms(ds, l, seed)?;
    let per_fold: Vec<(Vec<f64>, Option<Vec<f64>>)> = (0..l)
        .into_par_iter()
        .map(|k| {
            let go = || -> Result<_> {
                let train = ds.select(&plan.complement(k));
                let eval = ds.select(&plan.folds[k]);
                let bs = fitter(&train)?;
                let psi: Vec<f64> = eif_values(&eval, &bs, T::zero())?.iter().map(|v| v.as_f64()).collect();
                let ey1 = if with_ey1 {
                    let r = ey1_rows(&eval, bs.require(BridgeKind::Ht)?, bs.require(BridgeKind::Q0)?)?;
                    Some(r.iter().map(|v| v.as_f64()).collect())
                } else {
                    None
                };
                Ok((psi, ey1))
            };
            go().stage(format!("fold {}", k + 1))
        })
        .collect::<Result<_>>()?;

    let n = ds.n();
    let mut psi_rows = vec![0.0; n];
    let mut ey1_rows = with_ey1.then(|| vec![0.0; n]);
    for (fold, (p, e)) in plan.folds.iter().zip(per_fold) {
        for (j, &i) in fold.iter().enumerate() {
            psi_rows[i] = p[j];
            if let (Some(dst), Some(src)) = (ey1_rows.as_mut(), e.as_ref()) {
                dst[i] = src[j];
            }
        }
    }
    Ok(CrossFitOutput { plan, psi_rows, ey1_rows })
}

/// Two-sided normal interval est ± z·se.
pub fn wald(est: f64, se: f64, level: f64) -> Result<Interval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    Ok(Interval { lo: est - z * se, hi: est + z * se, level })
}

fn pooled_se(rows: &[f64], center: f64) -> f64 {
    let n = rows.len() as f64;
    (rows.iter().map(|r| (r - center).powi(2)).sum::<f64>() / n).sqrt() / n.sqrt()
}

/// Cross-fitted ψ̂ with a Wald interval from the pooled EIF variance.
pub fn dml_estimate<T: Scalar>(
    ds: &Dataset<T>,
    l: usize,
    fitter: &Fitter<'_, T>,
    seed: u64,
    level: f64,
) -> Result<EstimateReport> {
    let cf = crossfit(ds, l, fitter, seed, false)?;
    report_from(&cf, level)
}

fn report_from(cf: &CrossFitOutput, level: f64) -> Result<EstimateReport> {
    let psi = cf.psi();
    let se = pooled_se(&cf.psi_rows, psi);
    let mut rep = EstimateReport::point(EstimatorTag::Pdml, psi);
    rep.se = Some(se);
    rep.ci = Some(wald(psi, se, level)?);
    for (k, m) in cf.fold_means(&cf.psi_rows).into_iter().enumerate() {
        rep.diagnostics.insert(format!("fold{}_psi", k + 1), m);
    }
    rep.diagnostics.insert("fold_seed".into(), cf.plan.seed as f64);
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanEstimate {
    pub estimate: f64,
    pub se: f64,
    pub ci: Interval,
}

/// Cross-fitted doubly robust E[Y(1)].
pub fn dml_ey1<T: Scalar>(
    ds: &Dataset<T>,
    l: usize,
    fitter: &Fitter<'_, T>,
    seed: u64,
    level: f64,
) -> Result<MeanEstimate> {
    let cf = crossfit(ds, l, fitter, seed, true)?;
    let rows = cf.ey1_rows.as_deref().unwrap_or_default();
    let estimate = cf.ey1().unwrap_or(f64::NAN);
    let se = pooled_se(rows, estimate);
    Ok(MeanEstimate { estimate, se, ci: wald(estimate, se, level)? })
}

/// ψ̂, E[Y(1)] and the effect summaries from one shared partition.
pub fn dml_effects<T: Scalar>(
    ds: &Dataset<T>,
    l: usize,
    fitter: &Fitter<'_, T>,
    seed: u64,
    level: f64,
    outcome: OutcomeKind,
) -> Result<(EstimateReport, EffectReport)> {
    let cf = crossfit(ds, l, fitter, seed, true)?;
    let rep = report_from(&cf, level)?;
    let ey1 = cf.ey1().unwrap_or(f64::NAN);
    let eff = EffectReport::from_influence(
        ey1,
        rep.psi_hat,
        cf.ey1_rows.as_deref().unwrap_or_default(),
        &cf.psi_rows,
        outcome,
    )?;
    Ok((rep, eff))
}

/// Kernel minimax nuisances with per-bridge cross-validated penalties.
pub fn kernel_fitter<T: Scalar>(cfg: KernelConfig, with_ht: bool) -> impl Fn(&Dataset<T>) -> Result<BridgeSet<T>> + Sync {
    move |d: &Dataset<T>| fit_all_bridges_kernel(d, &cfg, with_ht).map(|f| f.bridges)
}

/// Linear nuisances fitted with fixed maps.
pub fn parametric_fitter<T: Scalar>(maps: BridgeMaps, with_ht: bool) -> impl Fn(&Dataset<T>) -> Result<BridgeSet<T>> + Sync {
    move |d: &Dataset<T>| fit_parametric_bridges(d, &maps, with_ht)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remainder_goes_to_leading_folds() {
        let p = make_folds(11, 3, 7).unwrap();
        let sizes: Vec<usize> = p.folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
        let mut all: Vec<usize> = p.folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
    }

    #[test]
    fn too_few_rows() {
        assert!(make_folds(2, 3, 0).is_err());
        assert!(make_folds(10, 1, 0).is_err());
    }

    #[test]
    fn wald_95() {
        let ci = wald(1.0, 0.5, 0.95).unwrap();
        assert!((ci.hi - 1.0 - 0.5 * 1.959964).abs() < 1e-5);
    }
}

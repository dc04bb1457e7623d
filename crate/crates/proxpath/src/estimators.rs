//! Plug-in and influence-function estimators of the path-specific mean
//! ψ = E[Y(1, D(1), M(0, D(1)))], the counterfactual mean E[Y(1)], and the
//! effect summaries built from them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bridge::{Bridge, BridgeKind, BridgeSet};
use crate::data::Dataset;
use crate::dgp::{ramy_with_gradient, OutcomeKind};
use crate::error::{Error, Result};
use crate::parametric::{fit_ht, fit_q_chain, BridgeMaps};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorTag {
    #[serde(rename = "P-OR")]
    Por,
    #[serde(rename = "P-IPW")]
    Pipw,
    #[serde(rename = "P-hybrid1")]
    Phybrid1,
    #[serde(rename = "P-hybrid2")]
    Phybrid2,
    #[serde(rename = "P-quadR")]
    Pquadr,
    #[serde(rename = "P-DML")]
    Pdml,
}

impl EstimatorTag {
    pub const PLUGINS_AND_QUADR: [EstimatorTag; 5] =
        [EstimatorTag::Por, EstimatorTag::Pipw, EstimatorTag::Phybrid1, EstimatorTag::Phybrid2, EstimatorTag::Pquadr];

    /// Short command-line name.
    pub fn key(self) -> &'static str {
        match self {
            EstimatorTag::Por => "por",
            EstimatorTag::Pipw => "pipw",
            EstimatorTag::Phybrid1 => "phybrid1",
            EstimatorTag::Phybrid2 => "phybrid2",
            EstimatorTag::Pquadr => "quadr",
            EstimatorTag::Pdml => "dml",
        }
    }

    pub fn all() -> [EstimatorTag; 6] {
        [
            EstimatorTag::Por,
            EstimatorTag::Pipw,
            EstimatorTag::Phybrid1,
            EstimatorTag::Phybrid2,
            EstimatorTag::Pquadr,
            EstimatorTag::Pdml,
        ]
    }

    /// Which nuisances the estimator reads.
    pub fn needs(self) -> &'static [BridgeKind] {
        use BridgeKind::*;
        match self {
            EstimatorTag::Por => &[H0],
            EstimatorTag::Pipw => &[Q2],
            EstimatorTag::Phybrid1 => &[H1, Q0],
            EstimatorTag::Phybrid2 => &[H2, Q1],
            EstimatorTag::Pquadr | EstimatorTag::Pdml => &[H2, H1, H0, Q0, Q1, Q2],
        }
    }
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorTag::Por => "P-OR",
            EstimatorTag::Pipw => "P-IPW",
            EstimatorTag::Phybrid1 => "P-hybrid1",
            EstimatorTag::Phybrid2 => "P-hybrid2",
            EstimatorTag::Pquadr => "P-quadR",
            EstimatorTag::Pdml => "P-DML",
        })
    }
}

impl FromStr for EstimatorTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let k = s.trim().to_ascii_lowercase();
        EstimatorTag::all()
            .into_iter()
            .find(|t| t.key() == k || t.to_string().to_ascii_lowercase() == k)
            .ok_or_else(|| {
                let names: Vec<&str> = EstimatorTag::all().iter().map(|t| t.key()).collect();
                Error::Config(format!("unknown estimator `{s}`; valid names: {}", names.join(", ")))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub tag: EstimatorTag,
    pub psi_hat: f64,
    pub se: Option<f64>,
    pub ci: Option<Interval>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl EstimateReport {
    pub fn point(tag: EstimatorTag, psi_hat: f64) -> Self {
        EstimateReport { tag, psi_hat, se: None, ci: None, diagnostics: BTreeMap::new() }
    }

    pub const CSV_HEADER: &'static str = "estimator,psi_hat,se,ci_lo,ci_hi,level";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        format!(
            "{},{},{},{},{},{}",
            self.tag,
            self.psi_hat,
            opt(self.se),
            opt(self.ci.map(|c| c.lo)),
            opt(self.ci.map(|c| c.hi)),
            opt(self.ci.map(|c| c.level))
        )
    }
}

fn mean<T: Scalar>(v: &DVector<T>) -> Result<T> {
    if v.is_empty() {
        return Err(Error::Estimation("empty dataset".into()));
    }
    Ok(v.sum() / T::from_count(v.len()))
}

fn arm<T: Scalar>(ds: &Dataset<T>, a: u8) -> DVector<T> {
    DVector::from_iterator(ds.n(), ds.a().iter().map(|&v| if v == a { T::one() } else { T::zero() }))
}

/// (1/n) Σ h₀(Wᵢ, Xᵢ).
pub fn psi_por<T: Scalar>(ds: &Dataset<T>, h0: &Bridge<T>) -> Result<T> {
    mean(&h0.eval(ds)?)
}

/// (1/n) Σ Aᵢ Yᵢ q₂ᵢ.
pub fn psi_pipw<T: Scalar>(ds: &Dataset<T>, q2: &Bridge<T>) -> Result<T> {
    let y = DVector::from_column_slice(ds.y());
    mean(&arm(ds, 1).component_mul(&y).component_mul(&q2.eval(ds)?))
}

/// (1/n) Σ Aᵢ h₁ᵢ q₀ᵢ.
pub fn psi_hybrid1<T: Scalar>(ds: &Dataset<T>, h1: &Bridge<T>, q0: &Bridge<T>) -> Result<T> {
    mean(&arm(ds, 1).component_mul(&h1.eval(ds)?).component_mul(&q0.eval(ds)?))
}

/// (1/n) Σ (1 − Aᵢ) h₂ᵢ q₁ᵢ.
pub fn psi_hybrid2<T: Scalar>(ds: &Dataset<T>, h2: &Bridge<T>, q1: &Bridge<T>) -> Result<T> {
    mean(&arm(ds, 0).component_mul(&h2.eval(ds)?).component_mul(&q1.eval(ds)?))
}

/// The six nuisances evaluated on a dataset.
#[derive(Clone, Debug)]
pub struct BridgeValues<T: Scalar> {
    pub h2: DVector<T>,
    pub h1: DVector<T>,
    pub h0: DVector<T>,
    pub q0: DVector<T>,
    pub q1: DVector<T>,
    pub q2: DVector<T>,
}

impl<T: Scalar> BridgeValues<T> {
    pub fn evaluate(ds: &Dataset<T>, bs: &BridgeSet<T>) -> Result<Self> {
        let ev = |k| bs.require(k).and_then(|b| b.eval(ds));
        Ok(BridgeValues {
            h2: ev(BridgeKind::H2)?,
            h1: ev(BridgeKind::H1)?,
            h0: ev(BridgeKind::H0)?,
            q0: ev(BridgeKind::Q0)?,
            q1: ev(BridgeKind::Q1)?,
            q2: ev(BridgeKind::Q2)?,
        })
    }
}

/// The four additive pieces of the uncentered influence expression, per row:
/// A q₀ (h₁ − h₀), (1 − A) q₁ (h₂ − h₁), A q₂ (Y − h₂), h₀.
pub fn eif_terms<T: Scalar>(ds: &Dataset<T>, v: &BridgeValues<T>) -> [DVector<T>; 4] {
    let a1 = arm(ds, 1);
    let a0 = arm(ds, 0);
    let y = DVector::from_column_slice(ds.y());
    [
        a1.component_mul(&v.q0).component_mul(&(&v.h1 - &v.h0)),
        a0.component_mul(&v.q1).component_mul(&(&v.h2 - &v.h1)),
        a1.component_mul(&v.q2).component_mul(&(&y - &v.h2)),
        v.h0.clone(),
    ]
}

/// Per-row EIF at `psi`:
/// A q₀ (h₁ − h₀) + (1 − A) q₁ (h₂ − h₁) + A q₂ (Y − h₂) + h₀ − ψ.
pub fn eif_values<T: Scalar>(ds: &Dataset<T>, bs: &BridgeSet<T>, psi: T) -> Result<DVector<T>> {
    let v = BridgeValues::evaluate(ds, bs)?;
    Ok(eif_from_values(ds, &v, psi))
}

pub fn eif_from_values<T: Scalar>(ds: &Dataset<T>, v: &BridgeValues<T>, psi: T) -> DVector<T> {
    let [t1, t2, t3, t4] = eif_terms(ds, v);
    (t1 + t2 + t3 + t4).add_scalar(-psi)
}

fn sd<T: Scalar>(v: &DVector<T>) -> f64 {
    let n = v.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = v.iter().map(|x| x.as_f64()).sum::<f64>() / n as f64;
    (v.iter().map(|x| (x.as_f64() - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Sample mean of the uncentered EIF. Diagnostics carry the four plug-ins,
/// the per-term means and the analytic EIF standard error.
pub fn psi_quadr<T: Scalar>(ds: &Dataset<T>, bs: &BridgeSet<T>) -> Result<EstimateReport> {
    let v = BridgeValues::evaluate(ds, bs)?;
    let terms = eif_terms(ds, &v);
    let phi = eif_from_values(ds, &v, T::zero());
    let psi = mean(&phi)?;
    let n = ds.n();
    let mut rep = EstimateReport::point(EstimatorTag::Pquadr, psi.as_f64());
    let d = &mut rep.diagnostics;
    d.insert("eif_se".into(), sd(&phi) / (n as f64).sqrt());
    for (i, t) in terms.iter().enumerate() {
        d.insert(format!("term{}_mean", i + 1), mean(t)?.as_f64());
    }
    let y = DVector::from_column_slice(ds.y());
    let (a1, a0) = (arm(ds, 1), arm(ds, 0));
    d.insert("P-OR".into(), mean(&v.h0)?.as_f64());
    d.insert("P-IPW".into(), mean(&a1.component_mul(&y).component_mul(&v.q2))?.as_f64());
    d.insert("P-hybrid1".into(), mean(&a1.component_mul(&v.h1).component_mul(&v.q0))?.as_f64());
    d.insert("P-hybrid2".into(), mean(&a0.component_mul(&v.h2).component_mul(&v.q1))?.as_f64());
    Ok(rep)
}

/// Computes one plug-in (or quadR) from a bridge set.
pub fn estimate<T: Scalar>(tag: EstimatorTag, ds: &Dataset<T>, bs: &BridgeSet<T>) -> Result<T> {
    use BridgeKind::*;
    match tag {
        EstimatorTag::Por => psi_por(ds, bs.require(H0)?),
        EstimatorTag::Pipw => psi_pipw(ds, bs.require(Q2)?),
        EstimatorTag::Phybrid1 => psi_hybrid1(ds, bs.require(H1)?, bs.require(Q0)?),
        EstimatorTag::Phybrid2 => psi_hybrid2(ds, bs.require(H2)?, bs.require(Q1)?),
        EstimatorTag::Pquadr => mean(&eif_values(ds, bs, T::zero())?),
        EstimatorTag::Pdml => Err(Error::Config("P-DML needs cross-fitting; use crossfit::dml_estimate".into())),
    }
}

// ---------------------------------------------------------------------------
// E[Y(1)]

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ey1Mode {
    OutcomeBridge,
    TreatmentBridge,
    DoublyRobust,
}

/// Per-row uncentered influence expression A q₀ (Y − h̃) + h̃.
pub fn ey1_rows<T: Scalar>(ds: &Dataset<T>, ht: &Bridge<T>, q0: &Bridge<T>) -> Result<DVector<T>> {
    let h = ht.eval(ds)?;
    let q = q0.eval(ds)?;
    let y = DVector::from_column_slice(ds.y());
    Ok(arm(ds, 1).component_mul(&q).component_mul(&(y - &h)) + h)
}

/// E[Y(1)] from already fitted bridges.
pub fn ey1_from_bridges<T: Scalar>(ds: &Dataset<T>, ht: Option<&Bridge<T>>, q0: Option<&Bridge<T>>, mode: Ey1Mode) -> Result<T> {
    fn need<'a, T: Scalar>(b: Option<&'a Bridge<T>>, k: &str) -> Result<&'a Bridge<T>> {
        b.ok_or_else(|| Error::Config(format!("bridge {k} is missing")))
    }
    match mode {
        Ey1Mode::OutcomeBridge => mean(&need(ht, "ht")?.eval(ds)?),
        Ey1Mode::TreatmentBridge => {
            let y = DVector::from_column_slice(ds.y());
            mean(&arm(ds, 1).component_mul(&y).component_mul(&need(q0, "q0")?.eval(ds)?))
        }
        Ey1Mode::DoublyRobust => mean(&ey1_rows(ds, need(ht, "ht")?, need(q0, "q0")?)?),
    }
}

/// Fits the needed linear bridges with `maps` and returns E[Y(1)].
pub fn ey1_proximal<T: Scalar>(ds: &Dataset<T>, maps: &BridgeMaps, mode: Ey1Mode) -> Result<T> {
    if ds.count_treated() == 0 {
        return Err(Error::Estimation("no treated units".into()));
    }
    let ht = match mode {
        Ey1Mode::TreatmentBridge => None,
        _ => Some(Bridge::Linear(fit_ht(ds, maps)?.bridge)),
    };
    let q0 = match mode {
        Ey1Mode::OutcomeBridge => None,
        _ => Some(Bridge::Linear(crate::parametric::fit_q0(ds, maps)?.bridge)),
    };
    ey1_from_bridges(ds, ht.as_ref(), q0.as_ref(), mode)
}

// ---------------------------------------------------------------------------
// Effect summaries

/// P_AMY = ey1 − ψ; for binary outcomes coded with Y = 0 as the event,
/// R_AMY = 1 − odds(p₁)/odds(p₀) with p₁ = 1 − ey1, p₀ = 1 − ψ.
pub fn effect_summaries(ey1_hat: f64, psi_hat: f64, outcome: OutcomeKind) -> Result<(f64, Option<f64>)> {
    let pamy = ey1_hat - psi_hat;
    match outcome {
        OutcomeKind::Continuous => Ok((pamy, None)),
        OutcomeKind::Binary => {
            let inside = |v: f64| v > 0.0 && v < 1.0;
            if !inside(ey1_hat) || !inside(psi_hat) {
                return Err(Error::Estimation(format!(
                    "reduction in odds needs both means strictly inside (0, 1); got E[Y(1)] = {ey1_hat}, ψ = {psi_hat}"
                )));
            }
            Ok((pamy, Some(ramy_with_gradient(ey1_hat, psi_hat).0)))
        }
    }
}

/// Point estimates and influence-function standard errors of E[Y(1)], ψ
/// and the two effect summaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectReport {
    pub ey1: f64,
    pub ey1_se: f64,
    pub psi: f64,
    pub psi_se: f64,
    pub pamy: f64,
    pub pamy_se: f64,
    pub ramy: Option<f64>,
    pub ramy_se: Option<f64>,
}

impl EffectReport {
    /// `infl_ey1` and `infl_psi` are per-row influence values (centered or
    /// not; they are centered here). Standard errors are sd/√n.
    pub fn from_influence(ey1: f64, psi: f64, infl_ey1: &[f64], infl_psi: &[f64], outcome: OutcomeKind) -> Result<Self> {
        let n = infl_ey1.len();
        if n != infl_psi.len() || n < 2 {
            return Err(Error::Estimation("influence vectors must have equal length ≥ 2".into()));
        }
        let center = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / n as f64;
            v.iter().map(|x| x - m).collect::<Vec<_>>()
        };
        let (ce, cp) = (center(infl_ey1), center(infl_psi));
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (n as f64 - 1.0) / n as f64;
        let (vee, vpp, vep) = (dot(&ce, &ce), dot(&cp, &cp), dot(&ce, &cp));
        let (pamy, ramy) = effect_summaries(ey1, psi, outcome)?;
        let ramy_se = ramy.map(|_| {
            let (_, ge, gp) = ramy_with_gradient(ey1, psi);
            (ge * ge * vee + gp * gp * vpp + 2.0 * ge * gp * vep).max(0.0).sqrt()
        });
        Ok(EffectReport {
            ey1,
            ey1_se: vee.sqrt(),
            psi,
            psi_se: vpp.sqrt(),
            pamy,
            pamy_se: (vee + vpp - 2.0 * vep).max(0.0).sqrt(),
            ramy,
            ramy_se,
        })
    }
}

/// Effects from a full bridge set (six chain bridges plus `ht`) on one
/// sample: ψ by the uncentered EIF mean, E[Y(1)] doubly robust.
pub fn effects<T: Scalar>(ds: &Dataset<T>, bs: &BridgeSet<T>, outcome: OutcomeKind) -> Result<EffectReport> {
    let phi_psi = eif_values(ds, bs, T::zero())?;
    let phi_ey1 = ey1_rows(ds, bs.require(BridgeKind::Ht)?, bs.require(BridgeKind::Q0)?)?;
    let to = |v: &DVector<T>| v.iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
    let (pe, pp) = (to(&phi_ey1), to(&phi_psi));
    let ey1 = pe.iter().sum::<f64>() / pe.len() as f64;
    let psi = pp.iter().sum::<f64>() / pp.len() as f64;
    EffectReport::from_influence(ey1, psi, &pe, &pp, outcome)
}

/// Fits the linear chains (and h̃) and returns them as a bridge set.
pub fn fit_parametric_bridges<T: Scalar>(ds: &Dataset<T>, maps: &BridgeMaps, with_ht: bool) -> Result<BridgeSet<T>> {
    let hc = crate::parametric::fit_h_chain(ds, maps)?;
    let qc = fit_q_chain(ds, maps)?;
    let mut bs = BridgeSet::default();
    for st in hc.stages.into_iter().chain(qc.stages) {
        bs.insert(Bridge::Linear(st.bridge));
    }
    if with_ht {
        bs.insert(Bridge::Linear(fit_ht(ds, maps)?.bridge));
    }
    Ok(bs)
}

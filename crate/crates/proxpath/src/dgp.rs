//! Synthetic structural-equation model with a latent confounder `U`, its
//! interventional oracles, and the misspecification scenarios.
//!
//! Generation order is U → X → A → Z → D → M → W → Y. The treatment proxy Z
//! is a child of A and U (it never enters D, M, W or Y), the outcome proxy W a
//! child of U and X only. Under this design the outcome bridges are exactly
//! linear in (W, M, D, X) and the treatment bridges are exactly linear
//! combinations of two exponential-index features each; [`bridge_maps`]
//! builds those maps with offsets chosen so the true coefficients are all 1.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnSchema, Dataset, Role};
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, Term, Transform};
use crate::bridge::BridgeKind;
use crate::parametric::BridgeMaps;
use crate::seeds::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    #[default]
    Continuous,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateEq {
    pub mean: f64,
    pub sd: f64,
}

/// P(A = 1 | U, X) = expit(intercept + u·U + x·X).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentEq {
    pub intercept: f64,
    pub u: f64,
    #[serde(default)]
    pub x: f64,
}

/// Z = intercept + a·A + u·U + x·X + sd·ε.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZEq {
    pub intercept: f64,
    pub a: f64,
    pub u: f64,
    #[serde(default)]
    pub x: f64,
    pub sd: f64,
}

/// D = intercept + a·A + u·U + x·X + sd·ε.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DEq {
    pub intercept: f64,
    pub a: f64,
    pub u: f64,
    pub x: f64,
    pub sd: f64,
}

/// M = intercept + a·A + d·D + u·U + x·X + sd·ε.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MEq {
    pub intercept: f64,
    pub a: f64,
    pub d: f64,
    pub u: f64,
    pub x: f64,
    pub sd: f64,
}

/// W = intercept + u·U + x·X + sd·ε.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WEq {
    pub intercept: f64,
    pub u: f64,
    pub x: f64,
    pub sd: f64,
}

/// Linear index η = intercept + a·A + d·D + m·M + w·W + u·U + x·X.
/// Continuous outcomes are η + sd·ε; binary ones Bernoulli(expit(η)).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YEq {
    pub intercept: f64,
    pub a: f64,
    pub d: f64,
    pub m: f64,
    pub w: f64,
    pub u: f64,
    pub x: f64,
    pub sd: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub outcome: OutcomeKind,
    pub x: CovariateEq,
    pub a: TreatmentEq,
    pub z: ZEq,
    pub d: DEq,
    pub m: MEq,
    pub w: WEq,
    pub y: YEq,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            outcome: OutcomeKind::Continuous,
            x: CovariateEq { mean: 1.0, sd: 1.0 },
            a: TreatmentEq { intercept: 0.0, u: 0.3, x: 0.0 },
            z: ZEq { intercept: 1.0, a: 0.5, u: 1.5, x: 0.0, sd: 1.0 },
            d: DEq { intercept: 2.3, a: -1.0, u: -1.0, x: -0.5, sd: 2.0 },
            m: MEq { intercept: 0.5, a: 1.0, d: -0.5, u: -0.8, x: -0.5, sd: 2.0 },
            w: WEq { intercept: 0.8, u: 1.5, x: 0.3, sd: 1.0 },
            y: YEq { intercept: 0.8, a: 0.3, d: 0.6, m: 2.0, w: 0.5, u: 0.9, x: 0.3, sd: 0.3 },
        }
    }
}

impl ScenarioSpec {
    /// A binary-outcome variant of the default design.
    pub fn binary_default() -> Self {
        ScenarioSpec {
            outcome: OutcomeKind::Binary,
            y: YEq { intercept: 0.2, a: 0.4, d: 0.3, m: 0.5, w: 0.2, u: 0.5, x: 0.2, sd: 1.0 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sds = [
            ("x.sd", self.x.sd),
            ("z.sd", self.z.sd),
            ("d.sd", self.d.sd),
            ("m.sd", self.m.sd),
            ("w.sd", self.w.sd),
            ("y.sd", self.y.sd),
        ];
        for (name, v) in sds {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a positive finite noise scale")));
            }
        }
        if self.z.u == 0.0 {
            return Err(Error::Config("z.u must be nonzero: Z has to carry information on U".into()));
        }
        Ok(())
    }

    pub fn schema(&self) -> ColumnSchema {
        ColumnSchema::uniform(1)
    }

    #[inline]
    fn propensity(&self, u: f64, x: f64) -> f64 {
        expit(self.a.intercept + self.a.u * u + self.a.x * x)
    }

    #[inline]
    fn y_index(&self, a: f64, d: f64, m: f64, w: f64, u: f64, x: f64) -> f64 {
        let y = &self.y;
        y.intercept + y.a * a + y.d * d + y.m * m + y.w * w + y.u * u + y.x * x
    }

    /// E[Y | structural inputs]: the linear index, or its expit for binary Y.
    #[inline]
    fn y_mean(&self, eta: f64) -> f64 {
        match self.outcome {
            OutcomeKind::Continuous => eta,
            OutcomeKind::Binary => expit(eta),
        }
    }
}

#[inline]
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws `n` i.i.d. units. `U` is discarded.
pub fn simulate(spec: &ScenarioSpec, n: usize, seed: u64) -> Result<Dataset<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let mut y = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut blocks: [Vec<f64>; 5] = std::array::from_fn(|_| Vec::with_capacity(n));
    for _ in 0..n {
        let u = normal(&mut rng);
        let x = spec.x.mean + spec.x.sd * normal(&mut rng);
        let ai = rng.random::<f64>() < spec.propensity(u, x);
        let af = if ai { 1.0 } else { 0.0 };
        let z = spec.z.intercept + spec.z.a * af + spec.z.u * u + spec.z.x * x + spec.z.sd * normal(&mut rng);
        let d = spec.d.intercept + spec.d.a * af + spec.d.u * u + spec.d.x * x + spec.d.sd * normal(&mut rng);
        let m = spec.m.intercept
            + spec.m.a * af
            + spec.m.d * d
            + spec.m.u * u
            + spec.m.x * x
            + spec.m.sd * normal(&mut rng);
        let w = spec.w.intercept + spec.w.u * u + spec.w.x * x + spec.w.sd * normal(&mut rng);
        let eta = spec.y_index(af, d, m, w, u, x);
        let yi = match spec.outcome {
            OutcomeKind::Continuous => eta + spec.y.sd * normal(&mut rng),
            OutcomeKind::Binary => {
                if rng.random::<f64>() < expit(eta) {
                    1.0
                } else {
                    0.0
                }
            }
        };
        y.push(yi);
        a.push(ai as u8);
        blocks[0].push(d);
        blocks[1].push(m);
        blocks[2].push(z);
        blocks[3].push(w);
        blocks[4].push(x);
    }
    Dataset::from_columns(spec.schema(), y, a, blocks)
}

/// Monte Carlo values of the two nested counterfactual means, drawn with
/// common random numbers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleValues {
    pub n_mc: usize,
    pub psi: f64,
    pub psi_se: f64,
    pub ey1: f64,
    pub ey1_se: f64,
    pub pamy: f64,
    pub pamy_se: f64,
    /// Reduction in odds (binary outcomes only) and its delta-method SE.
    pub ramy: Option<f64>,
    pub ramy_se: Option<f64>,
}

/// Welford accumulator over paired draws.
#[derive(Default)]
struct Moments {
    n: f64,
    mean: [f64; 2],
    // co-moment matrix entries: (0,0), (1,1), (0,1)
    c: [f64; 3],
}

impl Moments {
    fn push(&mut self, v0: f64, v1: f64) {
        self.n += 1.0;
        let d0 = v0 - self.mean[0];
        let d1 = v1 - self.mean[1];
        self.mean[0] += d0 / self.n;
        self.mean[1] += d1 / self.n;
        self.c[0] += d0 * (v0 - self.mean[0]);
        self.c[1] += d1 * (v1 - self.mean[1]);
        self.c[2] += d0 * (v1 - self.mean[1]);
    }

    /// Sampling covariance of the two means.
    fn cov_of_means(&self) -> [f64; 3] {
        let k = self.n * (self.n - 1.0);
        [self.c[0] / k, self.c[1] / k, self.c[2] / k]
    }
}

/// Runs the interventional oracle: per draw of (U, X), D(1) from the
/// D-equation at a = 1, mediators M(0, D(1)) and M(1, D(1)) sharing one noise
/// draw, one W draw, and the conditional mean of Y at a = 1.
pub fn oracle(spec: &ScenarioSpec, n_mc: usize, seed: u64) -> Result<OracleValues> {
    spec.validate()?;
    if n_mc < 2 {
        return Err(Error::Config("n_mc must be at least 2".into()));
    }
    let mut rng = stream_rng(seed, 1);
    let mut acc = Moments::default();
    for _ in 0..n_mc {
        let u = normal(&mut rng);
        let x = spec.x.mean + spec.x.sd * normal(&mut rng);
        let d1 = spec.d.intercept + spec.d.a + spec.d.u * u + spec.d.x * x + spec.d.sd * normal(&mut rng);
        let m_base = spec.m.intercept + spec.m.d * d1 + spec.m.u * u + spec.m.x * x + spec.m.sd * normal(&mut rng);
        let m0 = m_base;
        let m1 = m_base + spec.m.a;
        let w = spec.w.intercept + spec.w.u * u + spec.w.x * x + spec.w.sd * normal(&mut rng);
        let psi_i = spec.y_mean(spec.y_index(1.0, d1, m0, w, u, x));
        let ey1_i = spec.y_mean(spec.y_index(1.0, d1, m1, w, u, x));
        acc.push(psi_i, ey1_i);
    }
    let [v_psi, v_ey1, c] = acc.cov_of_means();
    let clamp = |v: f64| v.max(0.0).sqrt();
    let (psi, ey1) = (acc.mean[0], acc.mean[1]);
    let pamy = ey1 - psi;
    let pamy_se = clamp(v_psi + v_ey1 - 2.0 * c);
    let (ramy, ramy_se) = match spec.outcome {
        OutcomeKind::Binary if psi > 0.0 && psi < 1.0 && ey1 > 0.0 && ey1 < 1.0 => {
            let (r, g_ey1, g_psi) = ramy_with_gradient(ey1, psi);
            let var = g_ey1 * g_ey1 * v_ey1 + g_psi * g_psi * v_psi + 2.0 * g_ey1 * g_psi * c;
            (Some(r), Some(clamp(var)))
        }
        _ => (None, None),
    };
    Ok(OracleValues {
        n_mc,
        psi,
        psi_se: clamp(v_psi),
        ey1,
        ey1_se: clamp(v_ey1),
        pamy,
        pamy_se,
        ramy,
        ramy_se,
    })
}

/// R = 1 − odds(1 − ey1)/odds(1 − psi) and its partial derivatives.
pub(crate) fn ramy_with_gradient(ey1: f64, psi: f64) -> (f64, f64, f64) {
    // p/(1-p) with p = 1 - e is (1-e)/e
    let o1 = (1.0 - ey1) / ey1;
    let o0 = (1.0 - psi) / psi;
    let r = 1.0 - o1 / o0;
    // d o1/d ey1 = -1/ey1², d(1/o0)/d psi = 1/(1-psi)²
    let g_ey1 = (1.0 / (ey1 * ey1)) / o0;
    let g_psi = -o1 / ((1.0 - psi) * (1.0 - psi));
    (r, g_ey1, g_psi)
}

pub fn oracle_psi(spec: &ScenarioSpec, n_mc: usize, seed: u64) -> Result<(f64, f64)> {
    let o = oracle(spec, n_mc, seed)?;
    Ok((o.psi, o.psi_se))
}

pub fn oracle_ey1(spec: &ScenarioSpec, n_mc: usize, seed: u64) -> Result<(f64, f64)> {
    let o = oracle(spec, n_mc, seed)?;
    Ok((o.ey1, o.ey1_se))
}

// ---------------------------------------------------------------------------
// Misspecification

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum MisspecificationMode {
    #[default]
    None,
    Scenario2,
    Scenario3,
    Scenario4,
    Scenario5,
}

impl MisspecificationMode {
    pub fn from_scenario(k: u8) -> Result<Self> {
        Ok(match k {
            1 => Self::None,
            2 => Self::Scenario2,
            3 => Self::Scenario3,
            4 => Self::Scenario4,
            5 => Self::Scenario5,
            _ => return Err(Error::Config(format!("scenario {k} is not one of 1..5"))),
        })
    }

    pub fn scenario(self) -> u8 {
        match self {
            Self::None => 1,
            Self::Scenario2 => 2,
            Self::Scenario3 => 3,
            Self::Scenario4 => 4,
            Self::Scenario5 => 5,
        }
    }

    /// Bridges whose regressor maps receive the corruption.
    pub fn corrupts(self, kind: BridgeKind) -> bool {
        use BridgeKind::*;
        match self {
            Self::None => false,
            Self::Scenario2 => matches!(kind, Q0 | Q1 | Q2),
            Self::Scenario3 => matches!(kind, H2 | H1 | H0),
            Self::Scenario4 => matches!(kind, H0 | Q1 | Q2),
            Self::Scenario5 => matches!(kind, H1 | H0 | Q2),
        }
    }
}

/// Attaches the corruption transform when `mode` targets the bridge `base`
/// serves (identified by the map id, e.g. `h2` or `q0`). Instrument maps
/// and untargeted bridges come back unchanged.
pub fn corrupted_feature_map(base: &FeatureSpec, mode: MisspecificationMode) -> FeatureSpec {
    match base.id.parse::<BridgeKind>() {
        Ok(kind) if mode.corrupts(kind) => base.clone().with_transform(Transform::Corrupted),
        _ => base.clone(),
    }
}

/// Regressor and instrument maps under which every linear bridge of the
/// design is correctly specified.
///
/// Outcome bridges are linear in their inputs. Treatment bridges are
/// `exp`-index features derived from the Gaussian likelihood ratios of Z,
/// D and M given U; instruments for the q-chain are (1, W).
pub fn bridge_maps(spec: &ScenarioSpec) -> BridgeMaps {
    let (au, ax, a0) = (spec.a.u, spec.a.x, spec.a.intercept);
    let z = &spec.z;
    let vz = z.sd * z.sd;
    let exp_term = |offset: f64, coefs: Vec<(Role, f64)>| Term::Exp {
        offset,
        coefs: coefs.into_iter().filter(|c| c.1 != 0.0).map(|(r, c)| (r, 1, c)).collect(),
    };

    // q0: E[q0 | A=1, U, X] = 1 + exp(-a0 - au U - ax X)
    let k0 = -au / z.u;
    let l0 = -ax - k0 * z.x;
    let off0 = -a0 - k0 * (z.intercept + z.a) - 0.5 * k0 * k0 * vz;
    let q0 = FeatureSpec::new("q0", vec![Term::Intercept, exp_term(off0, vec![(Role::Z, k0), (Role::X, l0)])]);

    // q1: E[q1 | A=0, U, D, X] = f(D|A=1)/f(D|A=0) · (1 + exp(a0 + au U + ax X))
    let rho = spec.d.a / (spec.d.sd * spec.d.sd);
    let base1 = -rho * spec.d.intercept - 0.5 * rho * spec.d.a;
    let q1_term = |u_coef: f64, x_coef: f64, extra: f64| {
        let s = u_coef / z.u;
        let lx = x_coef - s * z.x;
        let off = extra + base1 - s * z.intercept - 0.5 * s * s * vz;
        exp_term(off, vec![(Role::Z, s), (Role::D, rho), (Role::X, lx)])
    };
    let q1 = FeatureSpec::new(
        "q1",
        vec![
            q1_term(-rho * spec.d.u, -rho * spec.d.x, 0.0),
            q1_term(au - rho * spec.d.u, ax - rho * spec.d.x, a0),
        ],
    );

    // q2: E[q2 | A=1, U, M, D, X] = f(M|A=0)/f(M|A=1) · (1 + exp(-a0 - au U - ax X))
    let nu = spec.m.a / (spec.m.sd * spec.m.sd);
    let base2 = nu * spec.m.intercept + 0.5 * nu * spec.m.a;
    let q2_term = |u_coef: f64, x_coef: f64, extra: f64| {
        let s = u_coef / z.u;
        let lx = x_coef - s * z.x;
        let off = extra + base2 - s * (z.intercept + z.a) - 0.5 * s * s * vz;
        exp_term(off, vec![(Role::Z, s), (Role::M, -nu), (Role::D, nu * spec.m.d), (Role::X, lx)])
    };
    let q2 = FeatureSpec::new(
        "q2",
        vec![
            q2_term(nu * spec.m.u, nu * spec.m.x, 0.0),
            q2_term(nu * spec.m.u - au, nu * spec.m.x - ax, -a0),
        ],
    );

    let b = |id: &str| FeatureSpec::linear(id, &[Role::W]);
    BridgeMaps {
        q0,
        q1,
        q2,
        b0: b("b0"),
        b1: b("b1"),
        b2: b("b2"),
        ..BridgeMaps::linear()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let s = ScenarioSpec::default();
        assert_eq!(simulate(&s, 50, 9).unwrap(), simulate(&s, 50, 9).unwrap());
        assert_ne!(simulate(&s, 50, 9).unwrap(), simulate(&s, 50, 10).unwrap());
    }

    #[test]
    fn saturated_treatment() {
        let s = ScenarioSpec { a: TreatmentEq { intercept: 50.0, u: 0.0, x: 0.0 }, ..ScenarioSpec::default() };
        let ds = simulate(&s, 200, 1).unwrap();
        assert!(ds.a().iter().all(|&a| a == 1));
    }

    #[test]
    fn constant_outcome_oracle() {
        let s = ScenarioSpec {
            y: YEq { intercept: 2.5, a: 0.0, d: 0.0, m: 0.0, w: 0.0, u: 0.0, x: 0.0, sd: 1.0 },
            ..ScenarioSpec::default()
        };
        let o = oracle(&s, 10_000, 3).unwrap();
        assert_eq!(o.psi, 2.5);
        assert_eq!(o.ey1, 2.5);
        assert_eq!(o.psi_se, 0.0);
    }

    #[test]
    fn scenario_targets() {
        use BridgeKind::*;
        let m = MisspecificationMode::Scenario4;
        assert!(m.corrupts(H0) && m.corrupts(Q1) && m.corrupts(Q2));
        assert!(!m.corrupts(H1) && !m.corrupts(H2) && !m.corrupts(Q0));
        for k in [H2, H1, H0, Q0, Q1, Q2] {
            assert!(!MisspecificationMode::None.corrupts(k));
        }
    }

    #[test]
    fn ramy_gradient_matches_finite_differences() {
        let (e, p) = (0.7, 0.6);
        let (r, ge, gp) = ramy_with_gradient(e, p);
        let h = 1e-6;
        let fe = (ramy_with_gradient(e + h, p).0 - ramy_with_gradient(e - h, p).0) / (2.0 * h);
        let fp = (ramy_with_gradient(e, p + h).0 - ramy_with_gradient(e, p - h).0) / (2.0 * h);
        assert!((ge - fe).abs() < 1e-6 && (gp - fp).abs() < 1e-6);
        assert!(r > 0.0);
    }
}

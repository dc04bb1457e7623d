//! Linear-in-parameter bridges fitted by exactly identified estimating
//! equations, sequentially: h₂ → h₁ → h₀ and q₀ → q₁ → q₂.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bridge::BridgeKind;
use crate::data::{Dataset, Role};
use crate::dgp::{corrupted_feature_map, MisspecificationMode};
use crate::error::{Error, Result, StageExt};
use crate::features::FeatureSpec;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearBridge<T: Scalar> {
    pub kind: BridgeKind,
    pub regressors: FeatureSpec,
    pub coefficients: DVector<T>,
}

impl<T: Scalar> LinearBridge<T> {
    pub fn eval(&self, ds: &Dataset<T>) -> Result<DVector<T>> {
        let phi = self.regressors.design(ds)?;
        if phi.ncols() != self.coefficients.len() {
            return Err(Error::Config(format!(
                "{}: map has {} features but {} coefficients",
                self.kind,
                phi.ncols(),
                self.coefficients.len()
            )));
        }
        Ok(phi * &self.coefficients)
    }
}

/// Σᵢ Cᵢ · (wᵢ·(uᵢ + oᵢ) − sᵢ·Φᵢᵀθ) = 0.
///
/// `phi_weights` (s) multiply the modelled part and `target_weights` (w) the
/// known part, so both the h-equations (s = w = A or 1 − A) and the
/// q-equations (s = A or 1 − A, w ≡ 1) fit the same form.
#[derive(Clone, Debug)]
pub struct MomentProblem<T: Scalar> {
    pub phi_weights: DVector<T>,
    pub target_weights: DVector<T>,
    pub instruments: DMatrix<T>,
    pub regressors: DMatrix<T>,
    pub targets: DVector<T>,
    pub offset: DVector<T>,
}

#[derive(Clone, Debug)]
pub struct MomentSolution<T: Scalar> {
    pub theta: DVector<T>,
    /// Euclidean norm of the empirical moment vector at `theta`, for the
    /// system actually solved (after ridge, if applied).
    pub residual_norm: T,
    /// Tolerance the residual was checked against.
    pub tolerance: T,
    pub sigma_min: T,
    pub ridged: bool,
}

fn moment_tolerance<T: Scalar>(targets: &DVector<T>, n: usize) -> T {
    let sup = targets.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let rel = T::lit(1e-8).max(T::default_epsilon() * T::lit(100.0));
    rel * (T::one() + sup) * T::from_count(n.max(1))
}

fn smallest_singular<T: Scalar>(g: &DMatrix<T>) -> (T, T) {
    let sv = g.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(T::zero(), |m, &v| m.max(v));
    let min = sv.iter().fold(T::max_value().unwrap_or(max), |m, &v| m.min(v));
    (min, max)
}

pub fn solve_linear_moment<T: Scalar>(p: &MomentProblem<T>) -> Result<MomentSolution<T>> {
    let n = p.regressors.nrows();
    let k = p.regressors.ncols();
    if p.instruments.nrows() != n
        || p.targets.len() != n
        || p.offset.len() != n
        || p.phi_weights.len() != n
        || p.target_weights.len() != n
    {
        return Err(Error::Config("moment problem: row counts differ".into()));
    }
    if p.instruments.ncols() != k {
        return Err(Error::Config(format!(
            "moment problem must be exactly identified: {} instruments for {k} parameters",
            p.instruments.ncols()
        )));
    }

    let mut g = DMatrix::<T>::zeros(k, k);
    let mut rhs = DVector::<T>::zeros(k);
    for i in 0..n {
        let s = p.phi_weights[i];
        let w = p.target_weights[i] * (p.targets[i] + p.offset[i]);
        for a in 0..k {
            let c = p.instruments[(i, a)];
            if s != T::zero() {
                let cs = c * s;
                for b in 0..k {
                    g[(a, b)] += cs * p.regressors[(i, b)];
                }
            }
            rhs[a] += c * w;
        }
    }

    let (mut sigma_min, norm) = smallest_singular(&g);
    let cutoff = T::lit(1e-10) * norm;
    let mut ridged = false;
    if norm == T::zero() || !norm.finite() {
        return Err(Error::Singular { sigma_min: sigma_min.as_f64(), norm: norm.as_f64() });
    }
    if sigma_min < cutoff {
        let lambda = T::lit(1e-8) * norm;
        warn!(
            "near-singular moment system (σ_min = {:.3e}, ‖G‖ = {:.3e}); adding ridge {:.3e}",
            sigma_min.as_f64(),
            norm.as_f64(),
            lambda.as_f64()
        );
        for a in 0..k {
            g[(a, a)] += lambda;
        }
        ridged = true;
        let (smin2, _) = smallest_singular(&g);
        if smin2 < cutoff {
            return Err(Error::Singular { sigma_min: sigma_min.as_f64(), norm: norm.as_f64() });
        }
        sigma_min = smin2;
    }

    let lu = g.clone().full_piv_lu();
    let mut theta = lu
        .solve(&rhs)
        .ok_or(Error::Singular { sigma_min: sigma_min.as_f64(), norm: norm.as_f64() })?;
    // one round of iterative refinement
    let r = &rhs - &g * &theta;
    if let Some(dt) = lu.solve(&r) {
        theta += dt;
    }
    let residual_norm = (&rhs - &g * &theta).norm();
    let tolerance = moment_tolerance(&p.targets, n);
    if !(residual_norm <= tolerance) {
        return Err(Error::Numerical(format!(
            "moment residual {:.3e} exceeds tolerance {:.3e}",
            residual_norm.as_f64(),
            tolerance.as_f64()
        )));
    }
    Ok(MomentSolution { theta, residual_norm, tolerance, sigma_min, ridged })
}

/// Regressor maps of the seven linear bridges and their instrument maps.
/// `ht` is the single outcome bridge used for E[Y(1)].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeMaps {
    pub h2: FeatureSpec,
    pub h1: FeatureSpec,
    pub h0: FeatureSpec,
    pub c2: FeatureSpec,
    pub c1: FeatureSpec,
    pub c0: FeatureSpec,
    pub q0: FeatureSpec,
    pub q1: FeatureSpec,
    pub q2: FeatureSpec,
    pub b0: FeatureSpec,
    pub b1: FeatureSpec,
    pub b2: FeatureSpec,
    pub ht: FeatureSpec,
}

impl BridgeMaps {
    /// Intercept-augmented raw blocks throughout.
    pub fn linear() -> Self {
        use Role::*;
        let f = FeatureSpec::linear;
        BridgeMaps {
            h2: f("h2", &[W, M, D, X]),
            h1: f("h1", &[W, D, X]),
            h0: f("h0", &[W, X]),
            c2: f("c2", &[Z, M, D, X]),
            c1: f("c1", &[Z, D, X]),
            c0: f("c0", &[Z, X]),
            q0: f("q0", &[Z, X]),
            q1: f("q1", &[Z, D, X]),
            q2: f("q2", &[Z, M, D, X]),
            b0: f("b0", &[W, X]),
            b1: f("b1", &[W, D, X]),
            b2: f("b2", &[W, M, D, X]),
            ht: f("ht", &[W, X]),
        }
    }

    /// Same maps without the X block (for data with no covariates).
    pub fn linear_without_covariates() -> Self {
        use Role::*;
        let f = FeatureSpec::linear;
        BridgeMaps {
            h2: f("h2", &[W, M, D]),
            h1: f("h1", &[W, D]),
            h0: f("h0", &[W]),
            c2: f("c2", &[Z, M, D]),
            c1: f("c1", &[Z, D]),
            c0: f("c0", &[Z]),
            q0: f("q0", &[Z]),
            q1: f("q1", &[Z, D]),
            q2: f("q2", &[Z, M, D]),
            b0: f("b0", &[W]),
            b1: f("b1", &[W, D]),
            b2: f("b2", &[W, M, D]),
            ht: f("ht", &[W]),
        }
    }

    /// Corrupts the regressor maps of the bridges targeted by `mode`.
    pub fn misspecified(&self, mode: MisspecificationMode) -> Self {
        let c = |f: &FeatureSpec| corrupted_feature_map(f, mode);
        BridgeMaps {
            h2: c(&self.h2),
            h1: c(&self.h1),
            h0: c(&self.h0),
            q0: c(&self.q0),
            q1: c(&self.q1),
            q2: c(&self.q2),
            ..self.clone()
        }
    }

    pub fn regressor(&self, kind: BridgeKind) -> &FeatureSpec {
        match kind {
            BridgeKind::H2 => &self.h2,
            BridgeKind::H1 => &self.h1,
            BridgeKind::H0 => &self.h0,
            BridgeKind::Q0 => &self.q0,
            BridgeKind::Q1 => &self.q1,
            BridgeKind::Q2 => &self.q2,
            BridgeKind::Ht => &self.ht,
        }
    }

    pub fn instrument(&self, kind: BridgeKind) -> &FeatureSpec {
        match kind {
            BridgeKind::H2 => &self.c2,
            BridgeKind::H1 => &self.c1,
            BridgeKind::H0 | BridgeKind::Ht => &self.c0,
            BridgeKind::Q0 => &self.b0,
            BridgeKind::Q1 => &self.b1,
            BridgeKind::Q2 => &self.b2,
        }
    }
}

/// One fitted stage with its diagnostics.
#[derive(Clone, Debug)]
pub struct StageFit<T: Scalar> {
    pub bridge: LinearBridge<T>,
    pub fitted: DVector<T>,
    pub residual_norm: T,
    pub tolerance: T,
    pub ridged: bool,
}

#[derive(Clone, Debug)]
pub struct Chain<T: Scalar> {
    pub stages: [StageFit<T>; 3],
}

impl<T: Scalar> Chain<T> {
    pub fn bridges(&self) -> [&LinearBridge<T>; 3] {
        [&self.stages[0].bridge, &self.stages[1].bridge, &self.stages[2].bridge]
    }
}

fn indicator<T: Scalar>(ds: &Dataset<T>, arm: u8) -> DVector<T> {
    DVector::from_iterator(ds.n(), ds.a().iter().map(|&a| if a == arm { T::one() } else { T::zero() }))
}

fn fit_stage<T: Scalar>(
    ds: &Dataset<T>,
    maps: &BridgeMaps,
    kind: BridgeKind,
    phi_weights: DVector<T>,
    target_weights: DVector<T>,
    targets: DVector<T>,
) -> Result<StageFit<T>> {
    let go = || -> Result<StageFit<T>> {
        let regressors = maps.regressor(kind).design(ds)?;
        let instruments = maps.instrument(kind).design(ds)?;
        let p = MomentProblem {
            offset: DVector::zeros(ds.n()),
            phi_weights,
            target_weights,
            instruments,
            regressors,
            targets,
        };
        let sol = solve_linear_moment(&p)?;
        let fitted = &p.regressors * &sol.theta;
        Ok(StageFit {
            bridge: LinearBridge { kind, regressors: maps.regressor(kind).clone(), coefficients: sol.theta },
            fitted,
            residual_norm: sol.residual_norm,
            tolerance: sol.tolerance,
            ridged: sol.ridged,
        })
    };
    go().stage(kind.to_string())
}

/// Outcome chain: h₂ on A = 1 against Y, h₁ on A = 0 against ĥ₂, h₀ on A = 1
/// against ĥ₁.
pub fn fit_h_chain<T: Scalar>(ds: &Dataset<T>, maps: &BridgeMaps) -> Result<Chain<T>> {
    if !ds.has_both_arms() {
        return Err(Error::Estimation("both treatment arms are required".into()));
    }
    let a1 = indicator(ds, 1);
    let a0 = indicator(ds, 0);
    let y = DVector::from_column_slice(ds.y());
    let h2 = fit_stage(ds, maps, BridgeKind::H2, a1.clone(), a1.clone(), y)?;
    let h1 = fit_stage(ds, maps, BridgeKind::H1, a0.clone(), a0, h2.fitted.clone())?;
    let h0 = fit_stage(ds, maps, BridgeKind::H0, a1.clone(), a1, h1.fitted.clone())?;
    Ok(Chain { stages: [h2, h1, h0] })
}

/// Treatment chain: Σ(A q₀ − 1) b₀ = 0, Σ((1−A) q₁ − A q̂₀) b₁ = 0,
/// Σ(A q₂ − (1−A) q̂₁) b₂ = 0. No propensity model is involved.
pub fn fit_q_chain<T: Scalar>(ds: &Dataset<T>, maps: &BridgeMaps) -> Result<Chain<T>> {
    if !ds.has_both_arms() {
        return Err(Error::Estimation("both treatment arms are required".into()));
    }
    let n = ds.n();
    let a1 = indicator(ds, 1);
    let a0 = indicator(ds, 0);
    let ones = DVector::from_element(n, T::one());
    let q0 = fit_stage(ds, maps, BridgeKind::Q0, a1.clone(), ones.clone(), ones.clone())?;
    let t1 = a1.component_mul(&q0.fitted);
    let q1 = fit_stage(ds, maps, BridgeKind::Q1, a0.clone(), ones.clone(), t1)?;
    let t2 = a0.component_mul(&q1.fitted);
    let q2 = fit_stage(ds, maps, BridgeKind::Q2, a1, ones, t2)?;
    Ok(Chain { stages: [q0, q1, q2] })
}

/// Only the first treatment stage, Σ (A q₀ − 1) b₀ = 0.
pub fn fit_q0<T: Scalar>(ds: &Dataset<T>, maps: &BridgeMaps) -> Result<StageFit<T>> {
    let ones = DVector::from_element(ds.n(), T::one());
    fit_stage(ds, maps, BridgeKind::Q0, indicator(ds, 1), ones.clone(), ones)
}

/// Single outcome bridge for E[Y(1)]: Σ A c₀ (Y − h̃) = 0.
pub fn fit_ht<T: Scalar>(ds: &Dataset<T>, maps: &BridgeMaps) -> Result<StageFit<T>> {
    let a1 = indicator(ds, 1);
    let y = DVector::from_column_slice(ds.y());
    fit_stage(ds, maps, BridgeKind::Ht, a1.clone(), a1, y)
}

/// Fraction of negative fitted values (q positivity is not enforced).
pub fn negative_fraction<T: Scalar>(v: &DVector<T>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().filter(|x| **x < T::zero()).count() as f64 / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(s: Vec<f64>, c: Vec<f64>, phi: Vec<f64>, u: Vec<f64>, k: usize) -> MomentProblem<f64> {
        let n = u.len();
        MomentProblem {
            phi_weights: DVector::from_vec(s.clone()),
            target_weights: DVector::from_vec(s),
            instruments: DMatrix::from_row_slice(n, k, &c),
            regressors: DMatrix::from_row_slice(n, k, &phi),
            targets: DVector::from_vec(u),
            offset: DVector::zeros(n),
        }
    }

    #[test]
    fn intercept_only_is_the_mean() {
        let y = vec![1.0, 2.0, 4.0, 9.0];
        let p = problem(vec![1.0; 4], vec![1.0; 4], vec![1.0; 4], y, 1);
        let sol = solve_linear_moment(&p).unwrap();
        assert!((sol.theta[0] - 4.0).abs() < 1e-14);
        assert!(!sol.ridged);
    }

    #[test]
    fn zero_weights_are_singular() {
        let p = problem(vec![0.0; 3], vec![1.0; 3], vec![1.0; 3], vec![1.0, 2.0, 3.0], 1);
        assert!(matches!(solve_linear_moment(&p), Err(Error::Singular { .. })));
    }

    #[test]
    fn rejects_over_identification() {
        let mut p = problem(vec![1.0; 3], vec![1.0; 3], vec![1.0; 3], vec![1.0, 2.0, 3.0], 1);
        p.instruments = DMatrix::from_element(3, 2, 1.0);
        assert!(matches!(solve_linear_moment(&p), Err(Error::Config(_))));
    }
}

//! Kernel minimax estimation of bridge functions.
//!
//! Each bridge solves
//!
//! ```text
//!   min_h max_f  (1/m) Σ [ρᵢ(h) f(zᵢ) − f(zᵢ)²] − λ_F ‖f‖² + λ_H ‖h‖²,
//!   ρᵢ(h) = uᵢ + sᵢ h(vᵢ)
//! ```
//!
//! over two Gaussian RKHSs. The inner maximizer has dual coefficients
//! β = ((2/m) K_f + 2λ_F I)⁻¹ (1/m) ρ, which profiles the problem to
//!
//! ```text
//!   P(α) = (1/4m) ρᵀ Ω ρ + λ_H αᵀ K_h α,   Ω = K_f (K_f + m λ_F I)⁻¹.
//! ```
//!
//! With low-rank factors K_f ≈ F Fᵀ and K_h ≈ H Hᵀ (pivoted Cholesky) and
//! h = H γ, the minimizer is γ = −(Gᵀ M⁻¹ G + 4 m λ_H I)⁻¹ Gᵀ M⁻¹ e with
//! G = Fᵀ S H, e = Fᵀ u and M = FᵀF + m λ_F I — an r×r solve, which makes
//! the hyperparameter grid cheap.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::bridge::{Bridge, BridgeKind, BridgeSet};
use crate::data::{Dataset, Role};
use crate::error::{Error, Result, StageExt};
use crate::kernel::{cross_gram, gram, kernel_expand, pivoted_cholesky, KernelSpec, LowRank, LowRankOptions};
use crate::scalar::Scalar;
use crate::seeds::{child_seed, stream_rng};

#[derive(Clone, Debug, PartialEq)]
pub struct KernelBridge<T: Scalar> {
    pub kind: BridgeKind,
    /// Raw (unscaled) hypothesis inputs of the support points.
    pub support: DMatrix<T>,
    pub alpha: DVector<T>,
    pub kspec: KernelSpec<T>,
}

impl<T: Scalar> KernelBridge<T> {
    pub fn eval(&self, ds: &Dataset<T>) -> Result<DVector<T>> {
        let x = self.kspec.scaled(&self.kspec.inputs(ds)?);
        Ok(self.eval_scaled(&x))
    }

    /// Evaluation at raw input rows laid out like `support`.
    pub fn eval_inputs(&self, inputs: &DMatrix<T>) -> DVector<T> {
        self.eval_scaled(&self.kspec.scaled(inputs))
    }

    fn eval_scaled(&self, x: &DMatrix<T>) -> DVector<T> {
        kernel_expand(x, &self.kspec.scaled(&self.support), &self.alpha)
    }

    /// RKHS norm ‖h‖ = sqrt(αᵀ K α) over the support.
    pub fn rkhs_norm(&self) -> T {
        let s = self.kspec.scaled(&self.support);
        let k = gram(&s);
        (self.alpha.dot(&(k * &self.alpha))).max(T::zero()).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct SaddleProblem<T: Scalar> {
    pub u: DVector<T>,
    pub s: DVector<T>,
    pub hyp_inputs: DMatrix<T>,
    pub inst_inputs: DMatrix<T>,
    pub hyp_kernel: KernelSpec<T>,
    pub inst_kernel: KernelSpec<T>,
    pub lambda_h: T,
    pub lambda_f: T,
}

impl<T: Scalar> SaddleProblem<T> {
    pub fn m(&self) -> usize {
        self.u.len()
    }

    fn validate(&self) -> Result<()> {
        let m = self.m();
        if m == 0 {
            return Err(Error::Estimation("empty saddle problem".into()));
        }
        if self.s.len() != m || self.hyp_inputs.nrows() != m || self.inst_inputs.nrows() != m {
            return Err(Error::Config("saddle problem: row counts differ".into()));
        }
        if self.hyp_inputs.ncols() != self.hyp_kernel.width() || self.inst_inputs.ncols() != self.inst_kernel.width() {
            return Err(Error::Config("saddle problem: input widths do not match kernels".into()));
        }
        if !(self.lambda_h > T::zero()) || !(self.lambda_f > T::zero()) {
            return Err(Error::Config("λ_H and λ_F must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SaddleFit<T: Scalar> {
    pub bridge: KernelBridge<T>,
    /// Row indices (into the problem) of the support points.
    pub support_rows: Vec<usize>,
    /// h at the training rows.
    pub fitted: DVector<T>,
    pub rank_h: usize,
    pub rank_f: usize,
}

/// Everything that does not depend on (λ_H, λ_F).
struct Prepared<T: Scalar> {
    m: usize,
    h: LowRank<T>,
    ftf: DMatrix<T>,
    g: DMatrix<T>,
    e: DVector<T>,
    rank_f: usize,
}

impl<T: Scalar> Prepared<T> {
    fn new(u: &DVector<T>, s: &DVector<T>, hyp_scaled: &DMatrix<T>, inst_scaled: &DMatrix<T>, opts: LowRankOptions) -> Self {
        let f = pivoted_cholesky(inst_scaled, opts);
        let h = pivoted_cholesky(hyp_scaled, opts);
        let mut sh = h.factor.clone();
        for (i, mut row) in sh.row_iter_mut().enumerate() {
            row *= s[i];
        }
        let ft = f.factor.transpose();
        let g = &ft * &sh;
        let e = &ft * u;
        let ftf = &ft * &f.factor;
        Prepared { m: u.len(), rank_f: f.rank(), h, ftf, g, e }
    }

    /// Returns γ for one hyperparameter pair.
    fn gamma(&self, lambda_h: T, lambda_f: T) -> Result<DVector<T>> {
        Ok(self.gammas(lambda_f, &[lambda_h])?.remove(0))
    }

    /// γ for one λ_F and several λ_H. The λ_F system is factored once and
    /// GᵀM⁻¹G is diagonalized, so each extra λ_H costs O(r²).
    fn gammas(&self, lambda_f: T, lambda_hs: &[T]) -> Result<Vec<DVector<T>>> {
        let m = T::from_count(self.m);
        let rh = self.h.rank();
        if rh == 0 {
            return Ok(vec![DVector::zeros(0); lambda_hs.len()]);
        }
        let mut mf = self.ftf.clone();
        for i in 0..mf.nrows() {
            mf[(i, i)] += m * lambda_f;
        }
        let chol = mf.cholesky().ok_or_else(|| Error::Numerical("instrument Gram system is not positive definite".into()))?;
        let mg = chol.solve(&self.g);
        let me = chol.solve(&self.e);
        let mut a = self.g.transpose() * mg;
        // symmetrize against round-off before factorizing
        a = (&a + a.transpose()) * T::lit(0.5);
        let b = -(self.g.transpose() * me);
        let eig = a.symmetric_eigen();
        let vtb = eig.eigenvectors.transpose() * b;
        lambda_hs
            .iter()
            .map(|&lh| {
                let shift = T::lit(4.0) * m * lh;
                let mut c = vtb.clone();
                for (ci, &ev) in c.iter_mut().zip(eig.eigenvalues.iter()) {
                    let d = ev.max(T::zero()) + shift;
                    if !(d > T::zero()) {
                        return Err(Error::Numerical("hypothesis system is not positive definite".into()));
                    }
                    *ci /= d;
                }
                Ok(&eig.eigenvectors * c)
            })
            .collect()
    }

    /// Dual coefficients on the pivot points: L_PPᵀ a = γ.
    fn alpha(&self, gamma: &DVector<T>) -> Result<DVector<T>> {
        if gamma.is_empty() {
            return Ok(DVector::zeros(0));
        }
        let lpp = self.h.pivot_block();
        lpp.transpose()
            .solve_upper_triangular(gamma)
            .ok_or_else(|| Error::Numerical("singular pivot block".into()))
    }
}

fn select_rows<T: Scalar>(x: &DMatrix<T>, rows: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

fn select<T: Scalar>(v: &DVector<T>, rows: &[usize]) -> DVector<T> {
    DVector::from_iterator(rows.len(), rows.iter().map(|&i| v[i]))
}

/// Solves one regularized saddle problem.
pub fn solve_minimax<T: Scalar>(p: &SaddleProblem<T>, kind: BridgeKind, opts: LowRankOptions) -> Result<SaddleFit<T>> {
    p.validate()?;
    let hyp = p.hyp_kernel.scaled(&p.hyp_inputs);
    let inst = p.inst_kernel.scaled(&p.inst_inputs);
    let prep = Prepared::new(&p.u, &p.s, &hyp, &inst, opts);
    let gamma = prep.gamma(p.lambda_h, p.lambda_f)?;
    finish(&prep, &gamma, p, kind)
}

fn finish<T: Scalar>(prep: &Prepared<T>, gamma: &DVector<T>, p: &SaddleProblem<T>, kind: BridgeKind) -> Result<SaddleFit<T>> {
    let alpha = prep.alpha(gamma)?;
    let fitted = if gamma.is_empty() { DVector::zeros(p.m()) } else { &prep.h.factor * gamma };
    let support = select_rows(&p.hyp_inputs, &prep.h.pivots);
    Ok(SaddleFit {
        bridge: KernelBridge { kind, support, alpha, kspec: p.hyp_kernel.clone() },
        support_rows: prep.h.pivots.clone(),
        fitted,
        rank_h: prep.h.rank(),
        rank_f: prep.rank_f,
    })
}

/// Dense evaluation of the profiled objective at a full-length α (one
/// coefficient per problem row). Intended for small problems and checks.
pub fn profiled_objective<T: Scalar>(p: &SaddleProblem<T>, alpha: &DVector<T>) -> Result<T> {
    let (kh, omega) = dense_parts(p)?;
    let m = T::from_count(p.m());
    let rho = &p.u + p.s.component_mul(&(&kh * alpha));
    Ok(rho.dot(&(&omega * &rho)) / (T::lit(4.0) * m) + p.lambda_h * alpha.dot(&(&kh * alpha)))
}

/// Gradient of [`profiled_objective`] in α.
pub fn profiled_gradient<T: Scalar>(p: &SaddleProblem<T>, alpha: &DVector<T>) -> Result<DVector<T>> {
    let (kh, omega) = dense_parts(p)?;
    let m = T::from_count(p.m());
    let rho = &p.u + p.s.component_mul(&(&kh * alpha));
    let so = p.s.component_mul(&(&omega * &rho));
    Ok((&kh * so) / (T::lit(2.0) * m) + (&kh * alpha) * (T::lit(2.0) * p.lambda_h))
}

/// Closed-form inner maximizer β(α) = ((2/m) K_f + 2 λ_F I)⁻¹ (1/m) ρ(α).
pub fn inner_maximizer<T: Scalar>(p: &SaddleProblem<T>, alpha: &DVector<T>) -> Result<DVector<T>> {
    let kh = gram(&p.hyp_kernel.scaled(&p.hyp_inputs));
    let kf = gram(&p.inst_kernel.scaled(&p.inst_inputs));
    let m = T::from_count(p.m());
    let rho = &p.u + p.s.component_mul(&(&kh * alpha));
    let mut a = kf * (T::lit(2.0) / m);
    for i in 0..p.m() {
        a[(i, i)] += T::lit(2.0) * p.lambda_f;
    }
    a.lu().solve(&(rho / m)).ok_or_else(|| Error::Numerical("singular inner system".into()))
}

fn dense_parts<T: Scalar>(p: &SaddleProblem<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    p.validate()?;
    let m = p.m();
    let kh = gram(&p.hyp_kernel.scaled(&p.hyp_inputs));
    let kf = gram(&p.inst_kernel.scaled(&p.inst_inputs));
    let mut shifted = kf.clone();
    for i in 0..m {
        shifted[(i, i)] += T::from_count(m) * p.lambda_f;
    }
    // Ω = K_f (K_f + mλ I)⁻¹ = (K_f + mλ I)⁻¹ K_f (the two commute)
    let omega = shifted
        .cholesky()
        .ok_or_else(|| Error::Numerical("instrument Gram not positive definite".into()))?
        .solve(&kf);
    Ok((kh, omega))
}

/// Expands a fit's support coefficients to one coefficient per row.
pub fn full_alpha<T: Scalar>(fit: &SaddleFit<T>, m: usize) -> DVector<T> {
    let mut a = DVector::zeros(m);
    for (k, &i) in fit.support_rows.iter().enumerate() {
        a[i] = fit.bridge.alpha[k];
    }
    a
}

// ---------------------------------------------------------------------------
// Cross-validated fitting of the six displays

#[derive(Clone, Debug, PartialEq)]
pub struct KernelConfig {
    pub lambda_grid: Vec<f64>,
    pub cv_folds: usize,
    pub lowrank: LowRankOptions,
    /// Explicit bandwidths for some blocks; the rest use the median heuristic.
    pub bandwidth_overrides: Vec<(Role, f64)>,
    /// Multiplies every median-heuristic bandwidth (overrides are used as given).
    pub bandwidth_scale: f64,
    pub seed: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            lambda_grid: vec![1e-1, 1e-2, 1e-3, 1e-4],
            cv_folds: 3,
            lowrank: LowRankOptions::default(),
            bandwidth_overrides: Vec::new(),
            bandwidth_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub kind: BridgeKind,
    pub lambda_h: f64,
    pub lambda_f: f64,
    pub criterion: f64,
    pub rank_h: usize,
    pub rank_f: usize,
}

#[derive(Clone, Debug)]
pub struct KernelFits<T: Scalar> {
    pub bridges: BridgeSet<T>,
    pub selections: Vec<Selection>,
}

struct Layout {
    kind: BridgeKind,
    arm: Option<u8>,
    hyp: &'static [Role],
    inst: &'static [Role],
}

const LAYOUTS: [Layout; 7] = [
    Layout { kind: BridgeKind::H2, arm: Some(1), hyp: &[Role::W, Role::M, Role::D, Role::X], inst: &[Role::Z, Role::M, Role::D, Role::X] },
    Layout { kind: BridgeKind::H1, arm: Some(0), hyp: &[Role::W, Role::D, Role::X], inst: &[Role::Z, Role::D, Role::X] },
    Layout { kind: BridgeKind::H0, arm: Some(1), hyp: &[Role::W, Role::X], inst: &[Role::Z, Role::X] },
    Layout { kind: BridgeKind::Q0, arm: None, hyp: &[Role::Z, Role::X], inst: &[Role::W, Role::X] },
    Layout { kind: BridgeKind::Q1, arm: None, hyp: &[Role::Z, Role::D, Role::X], inst: &[Role::W, Role::D, Role::X] },
    Layout { kind: BridgeKind::Q2, arm: None, hyp: &[Role::Z, Role::M, Role::D, Role::X], inst: &[Role::W, Role::M, Role::D, Role::X] },
    Layout { kind: BridgeKind::Ht, arm: Some(1), hyp: &[Role::W, Role::X], inst: &[Role::Z, Role::X] },
];

fn display(kind: BridgeKind) -> &'static Layout {
    LAYOUTS.iter().find(|d| d.kind == kind).expect("all kinds listed")
}

fn kernel_for<T: Scalar>(ds: &Dataset<T>, blocks: &[Role], cfg: &KernelConfig) -> Result<KernelSpec<T>> {
    if !(cfg.bandwidth_scale > 0.0 && cfg.bandwidth_scale.is_finite()) {
        return Err(Error::Config(format!("bandwidth scale must be positive, got {}", cfg.bandwidth_scale)));
    }
    let mut k = KernelSpec::median_heuristic(ds, blocks)?;
    for b in k.bandwidths.iter_mut() {
        *b *= T::lit(cfg.bandwidth_scale);
    }
    for &(r, bw) in &cfg.bandwidth_overrides {
        if let Some(i) = k.blocks.iter().position(|&b| b == r) {
            if !(bw > 0.0) {
                return Err(Error::Config(format!("bandwidth override for {r} must be positive")));
            }
            k.bandwidths[i] = T::lit(bw);
        }
    }
    Ok(k)
}

/// Held-out projected moment: sup over the unit ball of the instrument RKHS
/// of the empirical moment, (1/m) sqrt(ρᵀ K ρ).
fn projected_moment<T: Scalar>(rho: &DVector<T>, k: &DMatrix<T>) -> T {
    let m = T::from_count(rho.len().max(1));
    rho.dot(&(k * rho)).max(T::zero()).sqrt() / m
}

/// Picks (λ_H, λ_F) by V-fold cross-validation, then refits on all rows.
#[allow(clippy::too_many_arguments)]
pub fn fit_display_cv<T: Scalar>(
    kind: BridgeKind,
    u: &DVector<T>,
    s: &DVector<T>,
    hyp_inputs: &DMatrix<T>,
    inst_inputs: &DMatrix<T>,
    hyp_kernel: &KernelSpec<T>,
    inst_kernel: &KernelSpec<T>,
    cfg: &KernelConfig,
) -> Result<(SaddleFit<T>, Selection)> {
    let m = u.len();
    if cfg.lambda_grid.is_empty() || cfg.lambda_grid.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Config("λ grid must be non-empty and positive".into()));
    }
    let hyp = hyp_kernel.scaled(hyp_inputs);
    let inst = inst_kernel.scaled(inst_inputs);
    let grid: Vec<(f64, f64)> =
        cfg.lambda_grid.iter().flat_map(|&lh| cfg.lambda_grid.iter().map(move |&lf| (lh, lf))).collect();

    let v = cfg.cv_folds;
    let mut scores = vec![0.0f64; grid.len()];
    let mut best = 0;
    if grid.len() > 1 && v >= 2 && m >= 2 * v {
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut stream_rng(child_seed(cfg.seed, kind as u64), 0));
        for fold in 0..v {
            let val: Vec<usize> = perm.iter().enumerate().filter(|(k, _)| k % v == fold).map(|(_, &i)| i).collect();
            let trn: Vec<usize> = perm.iter().enumerate().filter(|(k, _)| k % v != fold).map(|(_, &i)| i).collect();
            let prep = Prepared::new(&select(u, &trn), &select(s, &trn), &select_rows(&hyp, &trn), &select_rows(&inst, &trn), cfg.lowrank);
            let hyp_val = select_rows(&hyp, &val);
            let piv = select_rows(&select_rows(&hyp, &trn), &prep.h.pivots);
            let k_vp = cross_gram(&hyp_val, &piv);
            let k_val = gram(&select_rows(&inst, &val));
            let (u_val, s_val) = (select(u, &val), select(s, &val));
            let lhs: Vec<T> = cfg.lambda_grid.iter().map(|&l| T::lit(l)).collect();
            for (j, &lf) in cfg.lambda_grid.iter().enumerate() {
                let gammas = prep.gammas(T::lit(lf), &lhs);
                for i in 0..lhs.len() {
                    // grid is ordered (λ_H outer, λ_F inner)
                    let g = i * cfg.lambda_grid.len() + j;
                    let a = match &gammas {
                        Ok(gs) => prep.alpha(&gs[i]),
                        Err(_) => Err(Error::Numerical(String::new())),
                    };
                    let score = match a {
                        Ok(a) => {
                            let h_val = if a.is_empty() { DVector::zeros(val.len()) } else { &k_vp * a };
                            let rho = &u_val + s_val.component_mul(&h_val);
                            projected_moment(&rho, &k_val).as_f64()
                        }
                        Err(_) => f64::INFINITY,
                    };
                    scores[g] += if score.is_finite() { score / v as f64 } else { f64::INFINITY };
                }
            }
        }
        for g in 1..grid.len() {
            if scores[g] < scores[best] {
                best = g;
            }
        }
        if !scores[best].is_finite() {
            return Err(Error::Numerical("every hyperparameter pair failed in cross-validation".into()));
        }
    }
    let (lh, lf) = grid[best];
    let problem = SaddleProblem {
        u: u.clone(),
        s: s.clone(),
        hyp_inputs: hyp_inputs.clone(),
        inst_inputs: inst_inputs.clone(),
        hyp_kernel: hyp_kernel.clone(),
        inst_kernel: inst_kernel.clone(),
        lambda_h: T::lit(lh),
        lambda_f: T::lit(lf),
    };
    let prep = Prepared::new(u, s, &hyp, &inst, cfg.lowrank);
    let gamma = prep.gamma(problem.lambda_h, problem.lambda_f)?;
    let fit = finish(&prep, &gamma, &problem, kind)?;
    let sel = Selection { kind, lambda_h: lh, lambda_f: lf, criterion: scores[best], rank_h: fit.rank_h, rank_f: fit.rank_f };
    Ok((fit, sel))
}

fn fit_one<T: Scalar>(
    ds: &Dataset<T>,
    kind: BridgeKind,
    u_of: impl Fn(&Dataset<T>) -> Result<DVector<T>>,
    s_of: impl Fn(&Dataset<T>) -> DVector<T>,
    cfg: &KernelConfig,
) -> Result<(KernelBridge<T>, Selection)> {
    let d = display(kind);
    let sub = match d.arm {
        Some(a) => ds.select(&ds.arm(a)),
        None => ds.clone(),
    };
    if sub.is_empty() {
        return Err(Error::Estimation("empty subsample".into())).stage(kind.to_string());
    }
    let go = || -> Result<(KernelBridge<T>, Selection)> {
        let hk = kernel_for(&sub, d.hyp, cfg)?;
        let ik = kernel_for(&sub, d.inst, cfg)?;
        let hyp = hk.inputs(&sub)?;
        let inst = ik.inputs(&sub)?;
        let u = u_of(&sub)?;
        let s = s_of(&sub);
        let (fit, sel) = fit_display_cv(kind, &u, &s, &hyp, &inst, &hk, &ik, cfg)?;
        Ok((fit.bridge, sel))
    };
    go().stage(kind.to_string())
}

fn treat<T: Scalar>(ds: &Dataset<T>, arm: u8) -> DVector<T> {
    DVector::from_iterator(ds.n(), ds.a().iter().map(|&a| if a == arm { T::one() } else { T::zero() }))
}

/// Fits ĥ₂ → ĥ₁ → ĥ₀ and q̂₀ → q̂₁ → q̂₂ (plus the E[Y(1)] bridge when
/// `with_ht`) by kernel minimax with per-bridge cross-validated penalties.
pub fn fit_all_bridges_kernel<T: Scalar>(ds: &Dataset<T>, cfg: &KernelConfig, with_ht: bool) -> Result<KernelFits<T>> {
    if !ds.has_both_arms() {
        return Err(Error::Estimation("both treatment arms are required".into()));
    }
    let minus = |d: &Dataset<T>| DVector::from_element(d.n(), -T::one());
    let mut bridges = BridgeSet::default();
    let mut selections = Vec::new();

    // ρ = Y − h₂ on A = 1
    let (h2, s) = fit_one(ds, BridgeKind::H2, |d| Ok(DVector::from_column_slice(d.y())), minus, cfg)?;
    selections.push(s);
    // ρ = ĥ₂ − h₁ on A = 0
    let (h1, s) = fit_one(ds, BridgeKind::H1, |d| h2.eval(d), minus, cfg)?;
    selections.push(s);
    // ρ = ĥ₁ − h₀ on A = 1
    let (h0, s) = fit_one(ds, BridgeKind::H0, |d| h1.eval(d), minus, cfg)?;
    selections.push(s);

    // ρ = A q₀ − 1 on the full sample
    let (q0, s) = fit_one(ds, BridgeKind::Q0, |d| Ok(DVector::from_element(d.n(), -T::one())), |d| treat(d, 1), cfg)?;
    selections.push(s);
    // ρ = (1 − A) q₁ − A q̂₀
    let (q1, s) = fit_one(ds, BridgeKind::Q1, |d| Ok(-treat(d, 1).component_mul(&q0.eval(d)?)), |d| treat(d, 0), cfg)?;
    selections.push(s);
    // ρ = A q₂ − (1 − A) q̂₁
    let (q2, s) = fit_one(ds, BridgeKind::Q2, |d| Ok(-treat(d, 0).component_mul(&q1.eval(d)?)), |d| treat(d, 1), cfg)?;
    selections.push(s);

    for b in [h2, h1, h0, q0, q1, q2] {
        bridges.insert(Bridge::Kernel(b));
    }
    if with_ht {
        let (ht, s) = fit_one(ds, BridgeKind::Ht, |d| Ok(DVector::from_column_slice(d.y())), minus, cfg)?;
        selections.push(s);
        bridges.insert(Bridge::Kernel(ht));
    }
    Ok(KernelFits { bridges, selections })
}

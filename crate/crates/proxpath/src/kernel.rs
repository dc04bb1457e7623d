//! Gaussian product kernels and low-rank Gram factorizations.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, Role};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// k(x, y) = exp(−½ Σ_b ‖x_b − y_b‖² / σ_b²) over the listed blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec<T: Scalar> {
    pub blocks: Vec<Role>,
    pub dims: Vec<usize>,
    pub bandwidths: Vec<T>,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn new(blocks: Vec<Role>, dims: Vec<usize>, bandwidths: Vec<T>) -> Result<Self> {
        if blocks.len() != bandwidths.len() || blocks.len() != dims.len() {
            return Err(Error::Config("kernel: one bandwidth and one width per block".into()));
        }
        if let Some(b) = bandwidths.iter().find(|b| !(**b > T::zero()) || !b.finite()) {
            return Err(Error::Config(format!("kernel bandwidth must be positive, got {b}")));
        }
        Ok(KernelSpec { blocks, dims, bandwidths })
    }

    /// Median-heuristic bandwidths computed on `ds` (blocks absent from the
    /// schema are skipped).
    pub fn median_heuristic(ds: &Dataset<T>, blocks: &[Role]) -> Result<Self> {
        let blocks: Vec<Role> = blocks.iter().copied().filter(|&r| ds.schema().dim(r) > 0).collect();
        let dims: Vec<usize> = blocks.iter().map(|&r| ds.schema().dim(r)).collect();
        let bw = blocks
            .iter()
            .zip(&dims)
            .map(|(&r, &k)| median_heuristic(ds.block(r), k))
            .collect();
        KernelSpec::new(blocks, dims, bw)
    }

    pub fn width(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Concatenated raw inputs of `ds` for this kernel's blocks.
    pub fn inputs(&self, ds: &Dataset<T>) -> Result<DMatrix<T>> {
        for (&r, &k) in self.blocks.iter().zip(&self.dims) {
            if ds.schema().dim(r) != k {
                return Err(Error::Config(format!("kernel block {r} has width {k}, data has {}", ds.schema().dim(r))));
            }
        }
        let n = ds.n();
        let mut out = DMatrix::zeros(n, self.width());
        let mut c0 = 0;
        for (&r, &k) in self.blocks.iter().zip(&self.dims) {
            let b = ds.block(r);
            for i in 0..n {
                for j in 0..k {
                    out[(i, c0 + j)] = b[i * k + j];
                }
            }
            c0 += k;
        }
        Ok(out)
    }

    /// Divides each column by its block bandwidth.
    pub fn scaled(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let mut out = x.clone();
        let mut c0 = 0;
        for (&k, &bw) in self.dims.iter().zip(&self.bandwidths) {
            for j in c0..c0 + k {
                out.column_mut(j).unscale_mut(bw);
            }
            c0 += k;
        }
        out
    }
}

/// Median pairwise Euclidean distance over (a deterministic subsample of)
/// the rows of a row-major `n × k` block.
pub fn median_heuristic<T: Scalar>(block: &[T], k: usize) -> T {
    const CAP: usize = 400;
    let n = block.len().checked_div(k).unwrap_or(0);
    let step = n.div_ceil(CAP).max(1);
    let rows: Vec<&[T]> = (0..n).step_by(step).map(|i| &block[i * k..(i + 1) * k]).collect();
    let mut d = Vec::with_capacity(rows.len() * rows.len() / 2);
    for i in 0..rows.len() {
        for j in 0..i {
            let s: T = rows[i].iter().zip(rows[j]).map(|(a, b)| (*a - *b) * (*a - *b)).fold(T::zero(), |x, y| x + y);
            d.push(s.sqrt());
        }
    }
    if d.is_empty() {
        return T::one();
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mid = d.len() / 2;
    let med = if d.len() % 2 == 0 { (d[mid - 1] + d[mid]) * T::lit(0.5) } else { d[mid] };
    if med > T::zero() {
        med
    } else {
        T::one()
    }
}

#[inline]
fn rbf_scaled<T: Scalar>(x: &DMatrix<T>, i: usize, y: &DMatrix<T>, j: usize) -> T {
    let mut s = T::zero();
    for c in 0..x.ncols() {
        let d = x[(i, c)] - y[(j, c)];
        s += d * d;
    }
    (-T::lit(0.5) * s).exp()
}

/// Gram matrix between two pre-scaled input sets.
pub fn cross_gram<T: Scalar>(x: &DMatrix<T>, y: &DMatrix<T>) -> DMatrix<T> {
    DMatrix::from_fn(x.nrows(), y.nrows(), |i, j| rbf_scaled(x, i, y, j))
}

/// Symmetric Gram matrix of a pre-scaled input set.
pub fn gram<T: Scalar>(x: &DMatrix<T>) -> DMatrix<T> {
    let m = x.nrows();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        k[(i, i)] = T::one();
        for j in 0..i {
            let v = rbf_scaled(x, i, x, j);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowRankOptions {
    /// Stop once every residual diagonal entry is below `tol` (the kernel
    /// diagonal is 1).
    pub tol: f64,
    pub max_rank: usize,
}

impl LowRankOptions {
    pub fn exact<T: Scalar>() -> Self {
        LowRankOptions { tol: T::FACTOR_TOL, max_rank: usize::MAX }
    }
}

impl Default for LowRankOptions {
    fn default() -> Self {
        LowRankOptions { tol: 1e-8, max_rank: 100 }
    }
}

/// K ≈ L Lᵀ with L = K[:, P] · L_PP⁻ᵀ, computed by greedy pivoted Cholesky
/// without forming K.
#[derive(Clone, Debug)]
pub struct LowRank<T: Scalar> {
    pub factor: DMatrix<T>,
    pub pivots: Vec<usize>,
    /// Largest residual diagonal left when the factorization stopped.
    pub residual: T,
}

impl<T: Scalar> LowRank<T> {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// The lower-triangular pivot block L[P, :].
    pub fn pivot_block(&self) -> DMatrix<T> {
        let r = self.rank();
        DMatrix::from_fn(r, r, |i, j| self.factor[(self.pivots[i], j)])
    }
}

/// Pivoted Cholesky of the Gram matrix of pre-scaled inputs `x`.
pub fn pivoted_cholesky<T: Scalar>(x: &DMatrix<T>, opts: LowRankOptions) -> LowRank<T> {
    let m = x.nrows();
    let cap = opts.max_rank.min(m);
    let tol = T::lit(opts.tol);
    let mut diag = vec![T::one(); m];
    let mut cols: Vec<Vec<T>> = Vec::with_capacity(cap.min(256));
    let mut pivots = Vec::with_capacity(cap.min(256));
    let mut residual = if m == 0 { T::zero() } else { T::one() };
    while pivots.len() < cap {
        let (p, &dmax) = diag
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .expect("non-empty");
        residual = dmax;
        if dmax <= tol {
            break;
        }
        let piv_row: Vec<T> = cols.iter().map(|c| c[p]).collect();
        let root = dmax.sqrt();
        let mut col = vec![T::zero(); m];
        for i in 0..m {
            if diag[i] == T::zero() && i != p {
                // already a pivot: exact zero in the residual
                continue;
            }
            let mut v = rbf_scaled(x, i, x, p);
            for (c, &lp) in cols.iter().zip(&piv_row) {
                v -= c[i] * lp;
            }
            col[i] = v / root;
        }
        col[p] = root;
        for i in 0..m {
            let d = diag[i] - col[i] * col[i];
            diag[i] = if d > T::zero() { d } else { T::zero() };
        }
        diag[p] = T::zero();
        cols.push(col);
        pivots.push(p);
        if pivots.len() == m {
            residual = T::zero();
        }
    }
    if pivots.len() == cap && cap < m {
        residual = diag.iter().fold(T::zero(), |a, &b| a.max(b));
    }
    let r = cols.len();
    let factor = DMatrix::from_fn(m, r, |i, j| cols[j][i]);
    LowRank { factor, pivots, residual }
}

/// Evaluates Σⱼ αⱼ k(supportⱼ, ·) at pre-scaled points.
pub fn kernel_expand<T: Scalar>(points: &DMatrix<T>, support: &DMatrix<T>, alpha: &DVector<T>) -> DVector<T> {
    let mut out = DVector::zeros(points.nrows());
    for i in 0..points.nrows() {
        let mut s = T::zero();
        for j in 0..support.nrows() {
            s += alpha[j] * rbf_scaled(points, i, support, j);
        }
        out[i] = s;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 * 0.3 - 1.0 + 0.01 * i as f64)
    }

    #[test]
    fn full_rank_factor_reproduces_gram() {
        let x = pts(25);
        let lr = pivoted_cholesky(&x, LowRankOptions { tol: 1e-14, max_rank: usize::MAX });
        let k = gram(&x);
        let approx = &lr.factor * lr.factor.transpose();
        assert!((k - approx).abs().max() < 1e-10);
    }

    #[test]
    fn factor_is_nystrom_form() {
        let x = pts(40);
        let lr = pivoted_cholesky(&x, LowRankOptions { tol: 1e-6, max_rank: 12 });
        let xp = DMatrix::from_fn(lr.rank(), 2, |i, j| x[(lr.pivots[i], j)]);
        let kxp = cross_gram(&x, &xp);
        let lpp = lr.pivot_block();
        // L = K[:,P] L_PP^{-T}  <=>  L L_PPᵀ = K[:,P]
        let back = &lr.factor * lpp.transpose();
        assert!((back - kxp).abs().max() < 1e-10);
    }

    #[test]
    fn median_of_three_points() {
        // distances 1, 2, 3 → median 2
        let b = [0.0, 1.0, 3.0];
        assert_eq!(median_heuristic(&b, 1), 2.0);
    }
}

//! Dense linear algebra: row-major matrices, LU and Cholesky factorizations,
//! inverses, truncated SVD and triangular solves.
//!
//! The heavy kernels (pivoted LU, Cholesky, SVD, matrix products) run on
//! `faer`; matrices are handed over as zero-copy row-major views.

use std::ops::{Index, IndexMut, Range};

use faer::linalg::solvers::{DenseSolveCore, LltError};
use faer::{Accum, MatMut, MatRef, Par, Side};

use crate::norm::LinearOperator;
use crate::{Error, Result};

/// Relative pivot threshold below which a matrix is declared singular.
pub const SINGULAR_PIVOT_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn from_row_slice(rows: usize, cols: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), rows * cols, "row slice length");
        DenseMatrix { rows, cols, data: values.to_vec() }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length");
        DenseMatrix { rows, cols, data }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn submatrix(&self, rows: Range<usize>, cols: Range<usize>) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(rows.len(), cols.len());
        for (k, i) in rows.enumerate() {
            out.row_mut(k).copy_from_slice(&self.row(i)[cols.clone()]);
        }
        out
    }

    /// Overwrites the block starting at `(row0, col0)` with `block`.
    pub fn set_submatrix(&mut self, row0: usize, col0: usize, block: &DenseMatrix) {
        for i in 0..block.rows {
            self.row_mut(row0 + i)[col0..col0 + block.cols].copy_from_slice(block.row(i));
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `self - other`
    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        DenseMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        if self.cols > 0 {
            faer::linalg::matmul::matmul(out.view_mut(), Accum::Replace, self.view(), other.view(), 1.0, Par::Seq);
        }
        out
    }

    /// `self -= a * b`
    pub fn sub_product(&mut self, a: &DenseMatrix, b: &DenseMatrix) {
        assert_eq!((a.rows, b.cols, a.cols), (self.rows, self.cols, b.rows));
        if a.cols > 0 {
            faer::linalg::matmul::matmul(self.view_mut(), Accum::Add, a.view(), b.view(), -1.0, Par::Seq);
        }
    }

    pub(crate) fn view(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.data, self.rows, self.cols)
    }

    pub(crate) fn view_mut(&mut self) -> MatMut<'_, f64> {
        MatMut::from_row_major_slice_mut(&mut self.data, self.rows, self.cols)
    }

    pub(crate) fn from_faer(m: MatRef<'_, f64>) -> Self {
        DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    fn check_factorizable(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch { expected: self.rows, got: self.cols });
        }
        if !self.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl LinearOperator for DenseMatrix {
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(self.row(i), x);
        }
    }
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (i, &xi) in x.iter().enumerate() {
            axpy(xi, self.row(i), y);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// `X Yᵀ` with `X: m×r` and `Y: n×r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor {
    pub x: DenseMatrix,
    pub y: DenseMatrix,
}

impl LowRankFactor {
    pub fn zero(rows: usize, cols: usize) -> Self {
        LowRankFactor { x: DenseMatrix::zeros(rows, 0), y: DenseMatrix::zeros(cols, 0) }
    }

    pub fn rank(&self) -> usize {
        self.x.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.y.nrows()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        self.x.matmul(&self.y.transpose())
    }

    pub fn transpose(&self) -> LowRankFactor {
        LowRankFactor { x: self.y.clone(), y: self.x.clone() }
    }

    /// `out += X (Yᵀ x)`
    pub fn apply_add(&self, x: &[f64], out: &mut [f64]) {
        LowRankFactor::apply_add_swapped(&self.x, &self.y, x, out)
    }

    /// `out += Y (Xᵀ x)`
    pub fn apply_transpose_add(&self, x: &[f64], out: &mut [f64]) {
        LowRankFactor::apply_add_swapped(&self.y, &self.x, x, out)
    }

    fn apply_add_swapped(left: &DenseMatrix, right: &DenseMatrix, x: &[f64], out: &mut [f64]) {
        let r = left.ncols();
        if r == 0 {
            return;
        }
        let mut t = vec![0.0; r];
        for (j, &xj) in x.iter().enumerate() {
            axpy(xj, right.row(j), &mut t);
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += dot(left.row(i), &t);
        }
    }
}

/// Pivoted LU factors with `P·A = L·U`; row `i` of `L·U` is row `perm[i]`
/// of `A`.
#[derive(Debug, Clone)]
pub struct LuFactors {
    pub l: DenseMatrix,
    pub u: DenseMatrix,
    pub perm: Vec<usize>,
}

pub fn lu_factor(a: &DenseMatrix) -> Result<LuFactors> {
    a.check_factorizable()?;
    let lu = a.view().partial_piv_lu();
    check_pivots(lu.U(), a.max_abs())?;
    let u = DenseMatrix::from_faer(lu.U());
    let perm = lu.P().arrays().0.to_vec();
    Ok(LuFactors { l: DenseMatrix::from_faer(lu.L()), u, perm })
}

fn check_pivots(u: MatRef<'_, f64>, scale: f64) -> Result<()> {
    for i in 0..u.nrows() {
        let pivot = u[(i, i)];
        if pivot.abs() <= SINGULAR_PIVOT_TOL * scale || !pivot.is_finite() {
            return Err(Error::Singular { index: i, pivot });
        }
    }
    Ok(())
}

/// Dense inverse through partial-pivoting LU.
pub fn inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    a.check_factorizable()?;
    if a.nrows() == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    let lu = a.view().partial_piv_lu();
    check_pivots(lu.U(), a.max_abs())?;
    Ok(DenseMatrix::from_faer(lu.inverse().as_ref()))
}

/// Unpivoted Doolittle LU: `A = L·U` with unit lower `L`.
pub fn lu_unpivoted(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    a.check_factorizable()?;
    let n = a.nrows();
    let scale = a.max_abs();
    let mut u = a.clone();
    let mut l = DenseMatrix::identity(n);
    for k in 0..n {
        let pivot = u[(k, k)];
        if pivot.abs() <= SINGULAR_PIVOT_TOL * scale || !pivot.is_finite() {
            return Err(Error::Singular { index: k, pivot });
        }
        for i in k + 1..n {
            let f = u[(i, k)] / pivot;
            l[(i, k)] = f;
            u[(i, k)] = 0.0;
            for j in k + 1..n {
                u[(i, j)] -= f * u[(k, j)];
            }
        }
    }
    Ok((l, u))
}

/// Lower Cholesky factor `L` with `A = L Lᵀ` and positive diagonal.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    a.check_factorizable()?;
    let tol = 1e-12 * a.max_abs();
    for i in 0..a.nrows() {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return Err(Error::InvalidArgument(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    match a.view().llt(Side::Lower) {
        Ok(llt) => Ok(DenseMatrix::from_faer(llt.L())),
        Err(LltError::NonPositivePivot { index }) => {
            Err(Error::NotPositiveDefinite { index, pivot: f64::NAN })
        }
    }
}

/// Full thin SVD `A = U diag(σ) Vᵀ`, kept around so that truncations to
/// several ranks reuse one decomposition.
#[derive(Debug, Clone)]
pub struct BlockSvd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl BlockSvd {
    pub fn new(a: &DenseMatrix) -> Result<BlockSvd> {
        if !a.is_finite() {
            return Err(Error::NonFinite);
        }
        let k = a.nrows().min(a.ncols());
        if k == 0 {
            return Ok(BlockSvd {
                u: DenseMatrix::zeros(a.nrows(), 0),
                sigma: Vec::new(),
                v: DenseMatrix::zeros(a.ncols(), 0),
            });
        }
        let svd = a
            .view()
            .thin_svd()
            .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
        let s = svd.S().column_vector();
        Ok(BlockSvd {
            u: DenseMatrix::from_faer(svd.U()),
            sigma: (0..k).map(|i| s[i]).collect(),
            v: DenseMatrix::from_faer(svd.V()),
        })
    }

    /// Best rank-`r` approximation `U_r (V_r Σ_r)ᵀ`; `r` is clamped to
    /// `min(m, n)`.
    pub fn truncate(&self, r: usize) -> LowRankFactor {
        let r = r.min(self.sigma.len());
        let x = DenseMatrix::from_fn(self.u.nrows(), r, |i, k| self.u[(i, k)]);
        let y = DenseMatrix::from_fn(self.v.nrows(), r, |j, k| self.v[(j, k)] * self.sigma[k]);
        LowRankFactor { x, y }
    }

    /// Spectral error of the rank-`r` truncation, `σ_{r+1}` (zero past the
    /// rank).
    pub fn truncation_error(&self, r: usize) -> f64 {
        self.sigma.get(r).copied().unwrap_or(0.0)
    }
}

/// Best rank-`r` approximation and all singular values of `a`.
pub fn truncated_svd(a: &DenseMatrix, r: usize) -> Result<(LowRankFactor, Vec<f64>)> {
    let svd = BlockSvd::new(a)?;
    Ok((svd.truncate(r), svd.sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagonal {
    Unit,
    NonUnit,
}

/// Solves `L X = B` for lower triangular `L`.
pub fn solve_lower(l: &DenseMatrix, diag: Diagonal, mut b: DenseMatrix) -> DenseMatrix {
    use faer::linalg::triangular_solve as ts;
    if b.nrows() > 0 && b.ncols() > 0 {
        match diag {
            Diagonal::Unit => ts::solve_unit_lower_triangular_in_place(l.view(), b.view_mut(), Par::Seq),
            Diagonal::NonUnit => ts::solve_lower_triangular_in_place(l.view(), b.view_mut(), Par::Seq),
        }
    }
    b
}

/// Solves `U X = B` for upper triangular `U`.
pub fn solve_upper(u: &DenseMatrix, diag: Diagonal, mut b: DenseMatrix) -> DenseMatrix {
    use faer::linalg::triangular_solve as ts;
    if b.nrows() > 0 && b.ncols() > 0 {
        match diag {
            Diagonal::Unit => ts::solve_unit_upper_triangular_in_place(u.view(), b.view_mut(), Par::Seq),
            Diagonal::NonUnit => ts::solve_upper_triangular_in_place(u.view(), b.view_mut(), Par::Seq),
        }
    }
    b
}

/// Forward substitution on a vector; errors on a zero diagonal entry.
pub fn forward_substitute(l: &DenseMatrix, diag: Diagonal, b: &mut [f64]) -> Result<()> {
    for i in 0..l.nrows() {
        let s = b[i] - dot(&l.row(i)[..i], &b[..i]);
        b[i] = match diag {
            Diagonal::Unit => s,
            Diagonal::NonUnit => divide_by_pivot(s, l[(i, i)], i)?,
        };
    }
    Ok(())
}

/// Backward substitution on a vector; errors on a zero diagonal entry.
pub fn backward_substitute(u: &DenseMatrix, diag: Diagonal, b: &mut [f64]) -> Result<()> {
    let n = u.nrows();
    for i in (0..n).rev() {
        let s = b[i] - dot(&u.row(i)[i + 1..], &b[i + 1..]);
        b[i] = match diag {
            Diagonal::Unit => s,
            Diagonal::NonUnit => divide_by_pivot(s, u[(i, i)], i)?,
        };
    }
    Ok(())
}

fn divide_by_pivot(s: f64, pivot: f64, index: usize) -> Result<f64> {
    if pivot == 0.0 {
        return Err(Error::Singular { index, pivot });
    }
    Ok(s / pivot)
}

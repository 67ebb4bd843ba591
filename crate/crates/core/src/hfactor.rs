//! Schur complements and hierarchical LU / Cholesky factors.
//!
//! Factors are computed exactly by recursing over the cluster tree on dense
//! Schur complement data; afterwards every admissible off-diagonal block of
//! the triangular factors is truncated to rank `r` by SVD. Near blocks and
//! the diagonal leaf blocks stay dense.

use std::io::{Read, Write};
use std::ops::Range;

use crate::cluster::{Block, BlockPartition, ClusterTree};
use crate::dense::{self, DenseMatrix, Diagonal};
use crate::hmatrix::{self, BlockData};
use crate::norm::{LinearOperator, PowerIteration};
use crate::{Error, Result};

/// `S(τ,σ) = A_τσ - A_τρ A_ρρ⁻¹ A_ρσ` with `ρ` the indices preceding
/// `τ ∪ σ`.
pub fn schur_complement(a: &DenseMatrix, tau: Range<usize>, sigma: Range<usize>) -> Result<DenseMatrix> {
    let n = a.nrows();
    if !a.is_square() || tau.end > n || sigma.end > n {
        return Err(Error::InvalidArgument(format!("ranges {tau:?}, {sigma:?} outside a {n}x{n} matrix")));
    }
    let rho = 0..tau.start.min(sigma.start);
    let mut s = a.submatrix(tau.clone(), sigma.clone());
    if rho.is_empty() {
        return Ok(s);
    }
    let lu = dense::lu_factor(&a.submatrix(rho.clone(), rho.clone()))?;
    let rhs = a.submatrix(rho.clone(), sigma);
    let permuted = DenseMatrix::from_fn(rhs.nrows(), rhs.ncols(), |i, j| rhs[(lu.perm[i], j)]);
    let y = dense::solve_lower(&lu.l, Diagonal::Unit, permuted);
    let z = dense::solve_upper(&lu.u, Diagonal::NonUnit, y);
    s.sub_product(&a.submatrix(tau, rho), &z);
    Ok(s)
}

/// Largest deviation between `S(τ,τ)` and the matrix assembled from the
/// Schur complements of the sons of `τ`:
/// `[[S₁₁, S₁₂], [S₂₁, S₂₂ + S₂₁ S₁₁⁻¹ S₁₂]]`.
pub fn schur_recursion_check(a: &DenseMatrix, tree: &ClusterTree, cluster: usize) -> Result<f64> {
    let c = tree.node(cluster);
    let Some([c1, c2]) = c.children else {
        return Err(Error::InvalidArgument(format!("cluster {cluster} is a leaf")));
    };
    let (t1, t2) = (tree.node(c1).range.clone(), tree.node(c2).range.clone());
    let s11 = schur_complement(a, t1.clone(), t1.clone())?;
    let s12 = schur_complement(a, t1.clone(), t2.clone())?;
    let s21 = schur_complement(a, t2.clone(), t1.clone())?;
    let mut s22 = schur_complement(a, t2.clone(), t2.clone())?;
    let lu = dense::lu_factor(&s11)?;
    let permuted = DenseMatrix::from_fn(s12.nrows(), s12.ncols(), |i, j| s12[(lu.perm[i], j)]);
    let solved = dense::solve_upper(&lu.u, Diagonal::NonUnit, dense::solve_lower(&lu.l, Diagonal::Unit, permuted));
    let mut correction = DenseMatrix::zeros(s22.nrows(), s22.ncols());
    correction.sub_product(&s21, &solved);
    s22 = s22.sub(&correction);

    let off = t1.len();
    let mut assembled = DenseMatrix::zeros(c.len(), c.len());
    assembled.set_submatrix(0, 0, &s11);
    assembled.set_submatrix(0, off, &s12);
    assembled.set_submatrix(off, 0, &s21);
    assembled.set_submatrix(off, off, &s22);
    let direct = schur_complement(a, c.range.clone(), c.range.clone())?;
    Ok(assembled.sub(&direct).max_abs())
}

/// Exact LU factors `A = L U` (unit lower `L`) obtained by the cluster-tree
/// recursion; no pivoting, so they coincide with the unique unpivoted LU.
#[derive(Debug, Clone)]
pub struct ExactLu {
    pub l: DenseMatrix,
    pub u: DenseMatrix,
}

/// Exact Cholesky factor `A = C Cᵀ` by the same recursion.
#[derive(Debug, Clone)]
pub struct ExactCholesky {
    pub c: DenseMatrix,
}

fn check_square(a: &DenseMatrix, tree: &ClusterTree) -> Result<()> {
    if a.nrows() != tree.len() || a.ncols() != tree.len() {
        return Err(Error::DimensionMismatch { expected: tree.len(), got: a.nrows() });
    }
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(())
}

impl ExactLu {
    /// `a` must be in cluster order.
    pub fn new(a: &DenseMatrix, tree: &ClusterTree) -> Result<Self> {
        check_square(a, tree)?;
        let n = a.nrows();
        let mut f = ExactLu { l: DenseMatrix::zeros(n, n), u: DenseMatrix::zeros(n, n) };
        f.recurse(tree, tree.root(), a.clone())?;
        Ok(f)
    }

    /// Factors `s = S(τ,τ)` into the diagonal block of `τ`.
    fn recurse(&mut self, tree: &ClusterTree, id: usize, s: DenseMatrix) -> Result<()> {
        let c = tree.node(id);
        let start = c.range.start;
        let Some([c1, c2]) = c.children else {
            let (l, u) = dense::lu_unpivoted(&s).map_err(|e| shift_index(e, start))?;
            self.l.set_submatrix(start, start, &l);
            self.u.set_submatrix(start, start, &u);
            return Ok(());
        };
        let (r1, r2) = (tree.node(c1).range.clone(), tree.node(c2).range.clone());
        let (k, m) = (r1.len(), c.len());
        self.recurse(tree, c1, s.submatrix(0..k, 0..k))?;
        let l11 = self.l.submatrix(r1.clone(), r1.clone());
        let u11 = self.u.submatrix(r1.clone(), r1.clone());
        // L21 = S21 U11⁻¹, U12 = L11⁻¹ S12
        let l21 = dense::solve_lower(&u11.transpose(), Diagonal::NonUnit, s.submatrix(k..m, 0..k).transpose()).transpose();
        let u12 = dense::solve_lower(&l11, Diagonal::Unit, s.submatrix(0..k, k..m));
        let mut s22 = s.submatrix(k..m, k..m);
        s22.sub_product(&l21, &u12);
        self.l.set_submatrix(r2.start, r1.start, &l21);
        self.u.set_submatrix(r1.start, r2.start, &u12);
        self.recurse(tree, c2, s22)
    }

    /// Truncated factors `(L_H, U_H)`; `r = usize::MAX` keeps every block
    /// exact.
    pub fn truncate(&self, partition: &BlockPartition, r: usize) -> Result<(HTriangularFactor, HTriangularFactor)> {
        Ok((
            HTriangularFactor::from_dense(&self.l, partition, Orientation::Lower, true, r)?,
            HTriangularFactor::from_dense(&self.u, partition, Orientation::Upper, false, r)?,
        ))
    }
}

impl ExactCholesky {
    pub fn new(a: &DenseMatrix, tree: &ClusterTree) -> Result<Self> {
        check_square(a, tree)?;
        let n = a.nrows();
        let mut f = ExactCholesky { c: DenseMatrix::zeros(n, n) };
        f.recurse(tree, tree.root(), a.clone())?;
        Ok(f)
    }

    fn recurse(&mut self, tree: &ClusterTree, id: usize, s: DenseMatrix) -> Result<()> {
        let c = tree.node(id);
        let start = c.range.start;
        let Some([c1, c2]) = c.children else {
            let l = dense::cholesky(&s).map_err(|e| shift_index(e, start))?;
            self.c.set_submatrix(start, start, &l);
            return Ok(());
        };
        let (r1, r2) = (tree.node(c1).range.clone(), tree.node(c2).range.clone());
        let (k, m) = (r1.len(), c.len());
        self.recurse(tree, c1, s.submatrix(0..k, 0..k))?;
        let c11 = self.c.submatrix(r1.clone(), r1.clone());
        // C21 = S21 C11⁻ᵀ
        let c21 = dense::solve_lower(&c11, Diagonal::NonUnit, s.submatrix(k..m, 0..k).transpose()).transpose();
        let mut s22 = s.submatrix(k..m, k..m);
        s22.sub_product(&c21, &c21.transpose());
        let s22 = DenseMatrix::from_fn(m - k, m - k, |i, j| 0.5 * (s22[(i, j)] + s22[(j, i)]));
        self.c.set_submatrix(r2.start, r1.start, &c21);
        self.recurse(tree, c2, s22)
    }

    pub fn truncate(&self, partition: &BlockPartition, r: usize) -> Result<HTriangularFactor> {
        HTriangularFactor::from_dense(&self.c, partition, Orientation::Lower, false, r)
    }
}

fn shift_index(e: Error, offset: usize) -> Error {
    match e {
        Error::Singular { index, pivot } => Error::Singular { index: index + offset, pivot },
        Error::NotPositiveDefinite { index, pivot } => Error::NotPositiveDefinite { index: index + offset, pivot },
        other => other,
    }
}

/// Rank-`r` H-LU factors of `a` (cluster order).
pub fn hlu_factorize(
    a: &DenseMatrix,
    tree: &ClusterTree,
    partition: &BlockPartition,
    r: usize,
) -> Result<(HTriangularFactor, HTriangularFactor)> {
    ExactLu::new(a, tree)?.truncate(partition, r)
}

/// Rank-`r` H-Cholesky factor `C_H` of a symmetric positive definite `a`.
pub fn hcholesky_factorize(
    a: &DenseMatrix,
    tree: &ClusterTree,
    partition: &BlockPartition,
    r: usize,
) -> Result<HTriangularFactor> {
    ExactCholesky::new(a, tree)?.truncate(partition, r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Lower,
    Upper,
}

/// Block triangular H-matrix: dense diagonal leaf blocks plus the
/// partition blocks of one triangle, low rank where admissible.
#[derive(Debug, Clone, PartialEq)]
pub struct HTriangularFactor {
    n: usize,
    orientation: Orientation,
    unit_diagonal: bool,
    blocks: Vec<(Block, BlockData)>,
    /// Diagonal block indices by increasing start.
    diagonal: Vec<usize>,
}

impl HTriangularFactor {
    /// Picks the blocks of `partition` in the triangle of `orientation` from
    /// the dense factor `t` and truncates the far ones to rank `r`.
    pub fn from_dense(
        t: &DenseMatrix,
        partition: &BlockPartition,
        orientation: Orientation,
        unit_diagonal: bool,
        r: usize,
    ) -> Result<Self> {
        if t.nrows() != partition.size() || t.ncols() != partition.size() {
            return Err(Error::DimensionMismatch { expected: partition.size(), got: t.nrows() });
        }
        let mut blocks = Vec::new();
        for b in partition.blocks() {
            let diagonal = b.rows == b.cols;
            let in_triangle = match orientation {
                Orientation::Lower => b.rows.start >= b.cols.end,
                Orientation::Upper => b.rows.end <= b.cols.start,
            };
            if !diagonal && !in_triangle {
                continue;
            }
            let sub = t.submatrix(b.rows.clone(), b.cols.clone());
            let data = if b.far && !diagonal {
                BlockData::LowRank(dense::truncated_svd(&sub, r)?.0)
            } else {
                BlockData::Dense(sub)
            };
            blocks.push((b.clone(), data));
        }
        Self::new(partition.size(), orientation, unit_diagonal, blocks)
    }

    fn new(n: usize, orientation: Orientation, unit_diagonal: bool, blocks: Vec<(Block, BlockData)>) -> Result<Self> {
        let mut diagonal: Vec<usize> = (0..blocks.len()).filter(|&i| blocks[i].0.rows == blocks[i].0.cols).collect();
        diagonal.sort_by_key(|&i| blocks[i].0.rows.start);
        let mut next = 0;
        for &i in &diagonal {
            if blocks[i].0.rows.start != next || !matches!(blocks[i].1, BlockData::Dense(_)) {
                return Err(Error::InvalidArgument("diagonal blocks must be dense and tile the index set".into()));
            }
            next = blocks[i].0.rows.end;
        }
        if next != n {
            return Err(Error::InvalidArgument("diagonal blocks must be dense and tile the index set".into()));
        }
        for (b, _) in &blocks {
            let ok = b.rows == b.cols
                || match orientation {
                    Orientation::Lower => b.rows.start >= b.cols.end,
                    Orientation::Upper => b.rows.end <= b.cols.start,
                };
            if !ok || b.rows.end > n || b.cols.end > n {
                return Err(Error::InvalidArgument(format!("block {:?}x{:?} outside the triangle", b.rows, b.cols)));
            }
        }
        Ok(HTriangularFactor { n, orientation, unit_diagonal, blocks, diagonal })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn unit_diagonal(&self) -> bool {
        self.unit_diagonal
    }

    pub fn blocks(&self) -> &[(Block, BlockData)] {
        &self.blocks
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n, self.n);
        for (b, data) in &self.blocks {
            out.set_submatrix(b.rows.start, b.cols.start, &data.to_dense());
        }
        out
    }

    pub fn storage_floats(&self) -> usize {
        self.blocks.iter().map(|(_, d)| d.stored_floats()).sum()
    }

    pub fn transpose(&self) -> HTriangularFactor {
        let blocks = self
            .blocks
            .iter()
            .map(|(b, d)| {
                let tb = Block {
                    rows: b.cols.clone(),
                    cols: b.rows.clone(),
                    row_cluster: b.col_cluster,
                    col_cluster: b.row_cluster,
                    level: b.level,
                    far: b.far,
                };
                let td = match d {
                    BlockData::Dense(m) => BlockData::Dense(m.transpose()),
                    BlockData::LowRank(f) => BlockData::LowRank(f.transpose()),
                };
                (tb, td)
            })
            .collect();
        let orientation = match self.orientation {
            Orientation::Lower => Orientation::Upper,
            Orientation::Upper => Orientation::Lower,
        };
        HTriangularFactor { n: self.n, orientation, unit_diagonal: self.unit_diagonal, blocks, diagonal: self.diagonal.clone() }
    }

    /// The principal sub-factor on a cluster range, re-indexed from 0.
    pub fn restrict(&self, range: Range<usize>) -> Result<HTriangularFactor> {
        let inside = |r: &Range<usize>| r.start >= range.start && r.end <= range.end;
        let disjoint = |r: &Range<usize>| r.end <= range.start || r.start >= range.end;
        let mut blocks = Vec::new();
        for (b, d) in &self.blocks {
            if inside(&b.rows) && inside(&b.cols) {
                let mut nb = b.clone();
                nb.rows = b.rows.start - range.start..b.rows.end - range.start;
                nb.cols = b.cols.start - range.start..b.cols.end - range.start;
                blocks.push((nb, d.clone()));
            } else if !(disjoint(&b.rows) || disjoint(&b.cols)) {
                return Err(Error::InvalidArgument(format!("range {range:?} cuts through block {:?}x{:?}", b.rows, b.cols)));
            }
        }
        Self::new(range.len(), self.orientation, self.unit_diagonal, blocks)
    }

    /// Solves `T x = b` (or `Tᵀ x = b`) by block substitution.
    fn solve_in_place(&self, b: &mut [f64], transposed: bool) -> Result<()> {
        let forward = (self.orientation == Orientation::Lower) != transposed;
        let order: Vec<usize> =
            if forward { self.diagonal.clone() } else { self.diagonal.iter().rev().copied().collect() };
        let diag = if self.unit_diagonal { Diagonal::Unit } else { Diagonal::NonUnit };
        for &k in &order {
            let (db, BlockData::Dense(d)) = &self.blocks[k] else { unreachable!("diagonal blocks are dense") };
            let seg = &mut b[db.rows.clone()];
            match (forward, transposed) {
                (true, false) => dense::forward_substitute(d, diag, seg),
                (false, false) => dense::backward_substitute(d, diag, seg),
                (true, true) => dense::forward_substitute(&d.transpose(), diag, seg),
                (false, true) => dense::backward_substitute(&d.transpose(), diag, seg),
            }
            .map_err(|e| shift_index(e, db.rows.start))?;
            for (blk, data) in &self.blocks {
                if blk.rows == blk.cols {
                    continue;
                }
                let (out, inp) = if transposed { (&blk.cols, &blk.rows) } else { (&blk.rows, &blk.cols) };
                let ready = if forward { inp.end == db.rows.end } else { inp.start == db.rows.start };
                if !ready {
                    continue;
                }
                let x = b[inp.clone()].to_vec();
                let mut update = vec![0.0; out.len()];
                if transposed {
                    data.apply_transpose_add(&x, &mut update);
                } else {
                    data.apply_add(&x, &mut update);
                }
                for (bi, u) in b[out.clone()].iter_mut().zip(update) {
                    *bi -= u;
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: rhs.len() });
        }
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x, false)?;
        Ok(x)
    }

    pub fn solve_transpose(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: rhs.len() });
        }
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x, true)?;
        Ok(x)
    }

    /// `T⁻¹` as an operator, for norm estimation.
    pub fn inverse_operator(&self) -> InverseOperator<'_> {
        InverseOperator(self)
    }

    /// Power-iteration estimate of `κ₂(T) = ‖T‖₂ ‖T⁻¹‖₂`.
    pub fn condition_estimate(&self, power: &PowerIteration) -> f64 {
        power.estimate(self).value * power.estimate(&self.inverse_operator()).value
    }

    /// Binary dump: magic `HTRI`, version, orientation byte (0 lower,
    /// 1 upper), unit-diagonal byte, then the block list of the
    /// H-matrix dump.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(hmatrix::MAGIC_TRIANGULAR)?;
        out.write_all(&hmatrix::DUMP_VERSION.to_le_bytes())?;
        out.write_all(&[(self.orientation == Orientation::Upper) as u8, self.unit_diagonal as u8])?;
        hmatrix::write_blocks(&mut out, self.n, &self.blocks)
    }

    pub fn read_dump<R: Read>(mut input: R) -> Result<Self> {
        hmatrix::read_header(&mut input, hmatrix::MAGIC_TRIANGULAR)?;
        let mut flags = [0u8; 2];
        input.read_exact(&mut flags)?;
        let orientation = if flags[0] == 1 { Orientation::Upper } else { Orientation::Lower };
        let (n, blocks) = hmatrix::read_blocks(&mut input)?;
        Self::new(n, orientation, flags[1] == 1, blocks)
    }
}

impl LinearOperator for HTriangularFactor {
    fn nrows(&self) -> usize {
        self.n
    }
    fn ncols(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (b, data) in &self.blocks {
            data.apply_add(&x[b.cols.clone()], &mut y[b.rows.clone()]);
        }
    }
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (b, data) in &self.blocks {
            data.apply_transpose_add(&x[b.rows.clone()], &mut y[b.cols.clone()]);
        }
    }
}

/// Applies `T⁻¹` through block substitution.
pub struct InverseOperator<'a>(&'a HTriangularFactor);

impl LinearOperator for InverseOperator<'_> {
    fn nrows(&self) -> usize {
        self.0.n
    }
    fn ncols(&self) -> usize {
        self.0.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
        self.0.solve_in_place(y, false).expect("nonsingular factor");
    }
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
        self.0.solve_in_place(y, true).expect("nonsingular factor");
    }
}

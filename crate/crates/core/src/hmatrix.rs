//! Blockwise low-rank matrices over a far/near partition.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::cluster::{Block, BlockPartition};
use crate::dense::{self, BlockSvd, DenseMatrix, LowRankFactor};
use crate::norm::LinearOperator;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum BlockData {
    Dense(DenseMatrix),
    LowRank(LowRankFactor),
}

impl BlockData {
    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            BlockData::Dense(d) => d.clone(),
            BlockData::LowRank(f) => f.to_dense(),
        }
    }

    pub fn stored_floats(&self) -> usize {
        match self {
            BlockData::Dense(d) => d.nrows() * d.ncols(),
            BlockData::LowRank(f) => f.rank() * (f.nrows() + f.ncols()),
        }
    }

    /// `out += B x`
    pub(crate) fn apply_add(&self, x: &[f64], out: &mut [f64]) {
        match self {
            BlockData::Dense(d) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += dense::dot(d.row(i), x);
                }
            }
            BlockData::LowRank(f) => f.apply_add(x, out),
        }
    }

    /// `out += Bᵀ x`
    pub(crate) fn apply_transpose_add(&self, x: &[f64], out: &mut [f64]) {
        match self {
            BlockData::Dense(d) => {
                for (i, &xi) in x.iter().enumerate() {
                    dense::axpy(xi, d.row(i), out);
                }
            }
            BlockData::LowRank(f) => f.apply_transpose_add(x, out),
        }
    }
}

/// Matrix stored as one [`BlockData`] per partition block.
#[derive(Debug, Clone, PartialEq)]
pub struct HMatrix {
    n: usize,
    blocks: Vec<(Block, BlockData)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageStats {
    pub floats: usize,
    /// `floats / N²`
    pub ratio: f64,
}

impl HMatrix {
    /// Validates that `blocks` exactly cover `n × n` with matching shapes.
    pub fn from_blocks(n: usize, blocks: Vec<(Block, BlockData)>) -> Result<Self> {
        let mut area = 0usize;
        for (b, data) in &blocks {
            let (m, k) = match data {
                BlockData::Dense(d) => (d.nrows(), d.ncols()),
                BlockData::LowRank(f) => (f.nrows(), f.ncols()),
            };
            if b.rows.end > n || b.cols.end > n || m != b.rows.len() || k != b.cols.len() {
                return Err(Error::InvalidArgument(format!(
                    "block {:?}x{:?} holds a {m}x{k} payload in a matrix of size {n}",
                    b.rows, b.cols
                )));
            }
            area += b.size();
        }
        if area != n * n {
            return Err(Error::InvalidArgument(format!("blocks cover {area} entries, expected {}", n * n)));
        }
        Ok(HMatrix { n, blocks })
    }

    /// Best blockwise rank-`r` approximation of `dense`: far blocks are cut
    /// to rank `r` by SVD, near blocks copied.
    pub fn compress(dense: &DenseMatrix, partition: &BlockPartition, r: usize) -> Result<Self> {
        Ok(CompressionCache::new(dense, partition, r)?.compress(r))
    }

    /// Every block copied densely.
    pub fn from_dense(dense: &DenseMatrix, partition: &BlockPartition) -> Result<Self> {
        check_shape(dense, partition)?;
        let blocks = partition
            .blocks()
            .iter()
            .map(|b| (b.clone(), BlockData::Dense(dense.submatrix(b.rows.clone(), b.cols.clone()))))
            .collect();
        Ok(HMatrix { n: partition.size(), blocks })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[(Block, BlockData)] {
        &self.blocks
    }

    pub fn max_rank(&self) -> usize {
        self.blocks
            .iter()
            .filter_map(|(_, d)| match d {
                BlockData::LowRank(f) => Some(f.rank()),
                BlockData::Dense(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n, self.n);
        for (b, data) in &self.blocks {
            out.set_submatrix(b.rows.start, b.cols.start, &data.to_dense());
        }
        out
    }

    pub fn storage_stats(&self) -> StorageStats {
        let floats = self.blocks.iter().map(|(_, d)| d.stored_floats()).sum();
        let ratio = if self.n == 0 { 0.0 } else { floats as f64 / (self.n * self.n) as f64 };
        StorageStats { floats, ratio }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        let mut y = vec![0.0; self.n];
        self.apply(x, &mut y);
        Ok(y)
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        let mut y = vec![0.0; self.n];
        self.apply_transpose(x, &mut y);
        Ok(y)
    }

    /// Binary dump: magic `HMAT`, then the block list (see [`write_blocks`]).
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(MAGIC_HMATRIX)?;
        out.write_all(&DUMP_VERSION.to_le_bytes())?;
        write_blocks(&mut out, self.n, &self.blocks)
    }

    pub fn read_dump<R: Read>(mut input: R) -> Result<Self> {
        read_header(&mut input, MAGIC_HMATRIX)?;
        let (n, blocks) = read_blocks(&mut input)?;
        HMatrix::from_blocks(n, blocks)
    }
}

impl LinearOperator for HMatrix {
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

fn check_shape(dense: &DenseMatrix, partition: &BlockPartition) -> Result<()> {
    let n = partition.size();
    if dense.nrows() != n || dense.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: dense.nrows() });
    }
    Ok(())
}

/// Far-block SVDs of one matrix, computed once and reused for a sweep over
/// ranks up to `max_rank`.
pub struct CompressionCache {
    n: usize,
    max_rank: usize,
    blocks: Vec<CachedBlock>,
}

enum CachedBlock {
    Near(Block, DenseMatrix),
    Far { block: Block, factor: LowRankFactor, sigma: Vec<f64> },
}

impl CompressionCache {
    pub fn new(dense: &DenseMatrix, partition: &BlockPartition, max_rank: usize) -> Result<Self> {
        check_shape(dense, partition)?;
        let blocks = partition
            .blocks()
            .par_iter()
            .map(|b| {
                let sub = dense.submatrix(b.rows.clone(), b.cols.clone());
                if !b.far {
                    return Ok(CachedBlock::Near(b.clone(), sub));
                }
                let svd = BlockSvd::new(&sub)?;
                Ok(CachedBlock::Far { block: b.clone(), factor: svd.truncate(max_rank), sigma: svd.sigma })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CompressionCache { n: partition.size(), max_rank, blocks })
    }

    pub fn max_rank(&self) -> usize {
        self.max_rank
    }

    /// Panics if `r` exceeds the cached rank.
    pub fn compress(&self, r: usize) -> HMatrix {
        assert!(r <= self.max_rank, "rank {r} exceeds cached rank {}", self.max_rank);
        let blocks = self
            .blocks
            .iter()
            .map(|cb| match cb {
                CachedBlock::Near(b, d) => (b.clone(), BlockData::Dense(d.clone())),
                CachedBlock::Far { block, factor, .. } => {
                    let k = r.min(factor.rank());
                    let x = factor.x.submatrix(0..factor.nrows(), 0..k);
                    let y = factor.y.submatrix(0..factor.ncols(), 0..k);
                    (block.clone(), BlockData::LowRank(LowRankFactor { x, y }))
                }
            })
            .collect();
        HMatrix { n: self.n, blocks }
    }

    /// Spectral error `σ_{r+1}` of every far block, in partition order.
    pub fn far_block_errors(&self, r: usize) -> Vec<f64> {
        self.blocks
            .iter()
            .filter_map(|cb| match cb {
                CachedBlock::Far { sigma, .. } => Some(sigma.get(r).copied().unwrap_or(0.0)),
                CachedBlock::Near(..) => None,
            })
            .collect()
    }

    /// Spectral norms of the blocks of `dense - compress(r)`, one per
    /// partition block (zero on near blocks).
    pub fn error_block_norms(&self, r: usize) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|cb| match cb {
                CachedBlock::Far { sigma, .. } => sigma.get(r).copied().unwrap_or(0.0),
                CachedBlock::Near(..) => 0.0,
            })
            .collect()
    }

    /// Frobenius norm of `dense - compress(r)`.
    pub fn frobenius_error(&self, r: usize) -> f64 {
        self.blocks
            .iter()
            .map(|cb| match cb {
                CachedBlock::Far { sigma, .. } => sigma.iter().skip(r).map(|s| s * s).sum(),
                CachedBlock::Near(..) => 0.0,
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Right-hand side of the level-wise norm bound
/// `‖M‖₂ ≤ C_sp Σ_ℓ max{‖M|_b‖₂ : level(b) = ℓ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormBoundReport {
    /// Largest block norm per row-cluster level `0..=depth`.
    pub level_max: Vec<f64>,
    pub sparsity_constant: usize,
    pub bound: f64,
}

/// `block_norms[i]` is the spectral norm of the block `partition.blocks()[i]`.
pub fn norm_bound(block_norms: &[f64], partition: &BlockPartition) -> Result<NormBoundReport> {
    if block_norms.len() != partition.blocks().len() {
        return Err(Error::DimensionMismatch { expected: partition.blocks().len(), got: block_norms.len() });
    }
    let mut level_max = vec![0.0f64; partition.max_level() + 1];
    for (b, &norm) in partition.blocks().iter().zip(block_norms) {
        level_max[b.level] = level_max[b.level].max(norm);
    }
    let sparsity_constant = partition.sparsity_constant();
    let bound = sparsity_constant as f64 * level_max.iter().sum::<f64>();
    Ok(NormBoundReport { level_max, sparsity_constant, bound })
}

/// Exact spectral norm of every block of `dense`, via SVD.
pub fn block_spectral_norms(dense: &DenseMatrix, partition: &BlockPartition) -> Result<Vec<f64>> {
    check_shape(dense, partition)?;
    partition
        .blocks()
        .par_iter()
        .map(|b| {
            let svd = BlockSvd::new(&dense.submatrix(b.rows.clone(), b.cols.clone()))?;
            Ok(svd.sigma.first().copied().unwrap_or(0.0))
        })
        .collect()
}

pub(crate) const MAGIC_HMATRIX: &[u8; 4] = b"HMAT";
pub(crate) const MAGIC_TRIANGULAR: &[u8; 4] = b"HTRI";
pub(crate) const DUMP_VERSION: u32 = 1;

/// Block list layout, all integers `u64` and floats `f64`, little endian:
/// `n`, block count, then per block `rows.start rows.end cols.start
/// cols.end`, a kind byte (0 dense, 1 low rank), the rank (0 for dense) and
/// the payload: the dense block row-major, or `X` then `Y` row-major.
pub(crate) fn write_blocks<W: Write>(out: &mut W, n: usize, blocks: &[(Block, BlockData)]) -> std::io::Result<()> {
    let u = |out: &mut W, v: usize| out.write_all(&(v as u64).to_le_bytes());
    u(out, n)?;
    u(out, blocks.len())?;
    for (b, data) in blocks {
        for v in [b.rows.start, b.rows.end, b.cols.start, b.cols.end] {
            u(out, v)?;
        }
        let payloads: Vec<&DenseMatrix> = match data {
            BlockData::Dense(d) => {
                out.write_all(&[0])?;
                u(out, 0)?;
                vec![d]
            }
            BlockData::LowRank(f) => {
                out.write_all(&[1])?;
                u(out, f.rank())?;
                vec![&f.x, &f.y]
            }
        };
        for m in payloads {
            for v in m.as_slice() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub(crate) fn read_header<R: Read>(input: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut head = [0u8; 4];
    input.read_exact(&mut head)?;
    if &head != magic {
        return Err(Error::InvalidArgument(format!("bad dump magic {head:?}")));
    }
    let mut version = [0u8; 4];
    input.read_exact(&mut version)?;
    if u32::from_le_bytes(version) != DUMP_VERSION {
        return Err(Error::InvalidArgument(format!("unsupported dump version {}", u32::from_le_bytes(version))));
    }
    Ok(())
}

pub(crate) fn read_blocks<R: Read>(input: &mut R) -> Result<(usize, Vec<(Block, BlockData)>)> {
    fn u<R: Read>(input: &mut R) -> Result<usize> {
        let mut b = [0u8; 8];
        input.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b) as usize)
    }
    fn mat<R: Read>(input: &mut R, rows: usize, cols: usize) -> Result<DenseMatrix> {
        let mut data = Vec::with_capacity(rows * cols);
        let mut b = [0u8; 8];
        for _ in 0..rows * cols {
            input.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        Ok(DenseMatrix::from_vec(rows, cols, data))
    }
    let n = u(input)?;
    let count = u(input)?;
    let mut blocks = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let (rs, re, cs, ce) = (u(input)?, u(input)?, u(input)?, u(input)?);
        if rs > re || cs > ce || re > n || ce > n {
            return Err(Error::InvalidArgument("corrupt block header".into()));
        }
        let mut kind = [0u8; 1];
        input.read_exact(&mut kind)?;
        let rank = u(input)?;
        let (m, k) = (re - rs, ce - cs);
        let (far, data) = match kind[0] {
            0 => (false, BlockData::Dense(mat(input, m, k)?)),
            1 => {
                if rank > m.max(k) {
                    return Err(Error::InvalidArgument("corrupt block rank".into()));
                }
                let x = mat(input, m, rank)?;
                let y = mat(input, k, rank)?;
                (true, BlockData::LowRank(LowRankFactor { x, y }))
            }
            other => return Err(Error::InvalidArgument(format!("unknown block kind {other}"))),
        };
        // cluster ids and levels are not part of the dump
        let block = Block { rows: rs..re, cols: cs..ce, row_cluster: 0, col_cluster: 0, level: 0, far };
        blocks.push((block, data));
    }
    Ok((n, blocks))
}

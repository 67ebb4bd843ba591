//! Geometric cluster trees, admissibility and block partitions.

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::str::FromStr;

use crate::fem::DofMap;
use crate::mesh::Mesh;
use crate::{Error, Result};

/// Leaf size used throughout the experiments.
pub const DEFAULT_LEAF_SIZE: usize = 25;
pub const DEFAULT_ETA: f64 = 2.0;

/// Axis-aligned hyper-cube `center ± side/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub dim: usize,
    pub center: [f64; 3],
    pub side: f64,
}

impl BoundingBox {
    /// Smallest cube with the same center as the box `[lo, hi]` that
    /// contains it.
    pub fn cube_around(dim: usize, lo: &[f64], hi: &[f64]) -> Self {
        let mut center = [0.0; 3];
        let mut side: f64 = 0.0;
        for k in 0..dim {
            center[k] = 0.5 * (lo[k] + hi[k]);
            side = side.max(hi[k] - lo[k]);
        }
        BoundingBox { dim, center, side }
    }

    pub fn diam(&self) -> f64 {
        self.side * (self.dim as f64).sqrt()
    }

    /// Euclidean distance between the boxes; zero if they intersect.
    pub fn dist(&self, other: &BoundingBox) -> f64 {
        (0..self.dim)
            .map(|k| {
                let gap = (self.center[k] - other.center[k]).abs() - 0.5 * (self.side + other.side);
                gap.max(0.0).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        (0..self.dim).all(|k| (x[k] - self.center[k]).abs() <= 0.5 * self.side + tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Admissibility {
    /// `max(diam) ≤ η dist`
    #[default]
    Strong,
    /// `min(diam) ≤ η dist`
    Weak,
}

impl fmt::Display for Admissibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Admissibility::Strong => "strong",
            Admissibility::Weak => "weak",
        })
    }
}

impl FromStr for Admissibility {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strong" => Ok(Admissibility::Strong),
            "weak" => Ok(Admissibility::Weak),
            _ => Err(Error::InvalidArgument(format!("unknown admissibility mode `{s}`"))),
        }
    }
}

pub fn is_admissible(tau: &BoundingBox, sigma: &BoundingBox, eta: f64, mode: Admissibility) -> bool {
    let (a, b) = (tau.diam(), sigma.diam());
    let diam = match mode {
        Admissibility::Strong => a.max(b),
        Admissibility::Weak => a.min(b),
    };
    diam <= eta * tau.dist(sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Index set as a range of the permuted ordering.
    pub range: Range<usize>,
    pub bbox: BoundingBox,
    pub children: Option<[usize; 2]>,
    pub level: usize,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Binary cluster tree; node 0 is the root and children follow their parent
/// in depth-first order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTree {
    dim: usize,
    leaf_size: usize,
    nodes: Vec<Cluster>,
    /// `old_of_new[p]` is the DOF stored at position `p`.
    old_of_new: Vec<usize>,
    new_of_old: Vec<usize>,
}

impl ClusterTree {
    /// Clusters the free DOFs of `mesh` by their node coordinates; boxes
    /// cover the full supports of the hat functions.
    pub fn build(mesh: &Mesh, dofmap: &DofMap, leaf_size: usize) -> Result<Self> {
        let d = mesh.dim();
        let nodes = dofmap.free_nodes();
        let mut lo = vec![f64::INFINITY; nodes.len() * d];
        let mut hi = vec![f64::NEG_INFINITY; nodes.len() * d];
        for verts in mesh.elements() {
            for &v in verts {
                let Some(j) = dofmap.dof(v) else { continue };
                for &w in verts {
                    for (k, &x) in mesh.node(w).iter().enumerate() {
                        lo[j * d + k] = lo[j * d + k].min(x);
                        hi[j * d + k] = hi[j * d + k].max(x);
                    }
                }
            }
        }
        let points: Vec<f64> = nodes.iter().flat_map(|&n| mesh.node(n).iter().copied()).collect();
        Self::from_points(d, &points, &lo, &hi, leaf_size)
    }

    /// General constructor: `points`, `support_lo` and `support_hi` are flat
    /// arrays with stride `dim`, one entry per index.
    pub fn from_points(
        dim: usize,
        points: &[f64],
        support_lo: &[f64],
        support_hi: &[f64],
        leaf_size: usize,
    ) -> Result<Self> {
        if leaf_size == 0 {
            return Err(Error::InvalidArgument("leaf size must be at least 1".into()));
        }
        if !(1..=3).contains(&dim) || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!("bad point array for dimension {dim}")));
        }
        let n = points.len() / dim;
        if n == 0 {
            return Err(Error::InvalidArgument("cannot cluster an empty index set".into()));
        }
        if support_lo.len() != points.len() || support_hi.len() != points.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), got: support_lo.len() });
        }
        let mut builder = Builder {
            dim,
            leaf_size,
            points,
            support_lo,
            support_hi,
            perm: (0..n).collect(),
            nodes: Vec::new(),
        };
        builder.split(0..n, 0)?;
        let Builder { nodes, perm, .. } = builder;
        let mut new_of_old = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            new_of_old[old] = new;
        }
        Ok(ClusterTree { dim, leaf_size, nodes, old_of_new: perm, new_of_old })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn len(&self) -> usize {
        self.old_of_new.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_of_new.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn nodes(&self) -> &[Cluster] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Cluster {
        &self.nodes[id]
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf())
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|c| c.level).max().unwrap_or(0)
    }

    pub fn old_of_new(&self) -> &[usize] {
        &self.old_of_new
    }

    pub fn new_of_old(&self) -> &[usize] {
        &self.new_of_old
    }
}

struct Builder<'a> {
    dim: usize,
    leaf_size: usize,
    points: &'a [f64],
    support_lo: &'a [f64],
    support_hi: &'a [f64],
    perm: Vec<usize>,
    nodes: Vec<Cluster>,
}

impl Builder<'_> {
    fn coord(&self, idx: usize, k: usize) -> f64 {
        self.points[idx * self.dim + k]
    }

    fn split(&mut self, range: Range<usize>, level: usize) -> Result<usize> {
        let d = self.dim;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut plo = [f64::INFINITY; 3];
        let mut phi = [f64::NEG_INFINITY; 3];
        for &i in &self.perm[range.clone()] {
            for k in 0..d {
                lo[k] = lo[k].min(self.support_lo[i * d + k]);
                hi[k] = hi[k].max(self.support_hi[i * d + k]);
                plo[k] = plo[k].min(self.coord(i, k));
                phi[k] = phi[k].max(self.coord(i, k));
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Cluster {
            range: range.clone(),
            bbox: BoundingBox::cube_around(d, &lo[..d], &hi[..d]),
            children: None,
            level,
        });
        if range.len() <= self.leaf_size {
            return Ok(id);
        }
        // longest axis of the tight point box, lowest axis on ties
        let axis = (0..d).fold(0, |best, k| if phi[k] - plo[k] > phi[best] - plo[best] { k } else { best });
        if phi[axis] - plo[axis] <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "{} indices share identical coordinates; cannot bisect",
                range.len()
            )));
        }
        let mid = 0.5 * (plo[axis] + phi[axis]);
        let slice = &mut self.perm[range.clone()];
        let (mut first, second): (Vec<usize>, Vec<usize>) =
            slice.iter().partition(|&&i| self.points[i * d + axis] < mid);
        let split = if first.is_empty() || second.is_empty() {
            // median fallback
            first = slice.to_vec();
            first.sort_by(|&a, &b| self.points[a * d + axis].total_cmp(&self.points[b * d + axis]).then(a.cmp(&b)));
            slice.copy_from_slice(&first);
            slice.len() / 2
        } else {
            let split = first.len();
            slice[..split].copy_from_slice(&first);
            slice[split..].copy_from_slice(&second);
            split
        };
        let left = self.split(range.start..range.start + split, level + 1)?;
        let right = self.split(range.start + split..range.end, level + 1)?;
        self.nodes[id].children = Some([left, right]);
        Ok(id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
    pub row_cluster: usize,
    pub col_cluster: usize,
    /// Level of the row cluster.
    pub level: usize,
    pub far: bool,
}

impl Block {
    pub fn size(&self) -> usize {
        self.rows.len() * self.cols.len()
    }
}

/// Far/near partition of `I × I`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    n: usize,
    eta: f64,
    mode: Admissibility,
    blocks: Vec<Block>,
    num_clusters: usize,
}

impl BlockPartition {
    pub fn build(tree: &ClusterTree, eta: f64, mode: Admissibility) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
        }
        let mut blocks = Vec::new();
        let mut stack = vec![(tree.root(), tree.root())];
        while let Some((t, s)) = stack.pop() {
            let (ct, cs) = (tree.node(t), tree.node(s));
            let far = is_admissible(&ct.bbox, &cs.bbox, eta, mode);
            if far || (ct.is_leaf() && cs.is_leaf()) {
                blocks.push(Block {
                    rows: ct.range.clone(),
                    cols: cs.range.clone(),
                    row_cluster: t,
                    col_cluster: s,
                    level: ct.level,
                    far,
                });
                continue;
            }
            let split_rows = !ct.is_leaf() && (cs.is_leaf() || ct.level <= cs.level);
            let split_cols = !cs.is_leaf() && (ct.is_leaf() || cs.level <= ct.level);
            let rows = if split_rows { ct.children.unwrap().to_vec() } else { vec![t] };
            let cols = if split_cols { cs.children.unwrap().to_vec() } else { vec![s] };
            // pushed in reverse so blocks come out in row-major child order
            for &r in rows.iter().rev() {
                for &c in cols.iter().rev() {
                    stack.push((r, c));
                }
            }
        }
        Ok(BlockPartition { n: tree.len(), eta, mode, blocks, num_clusters: tree.nodes().len() })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn mode(&self) -> Admissibility {
        self.mode
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn far_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| b.far)
    }

    pub fn near_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| !b.far)
    }

    /// Largest number of far blocks sharing a row or column cluster.
    pub fn sparsity_constant(&self) -> usize {
        let mut rows = vec![0usize; self.num_clusters];
        let mut cols = vec![0usize; self.num_clusters];
        for b in self.far_blocks() {
            rows[b.row_cluster] += 1;
            cols[b.col_cluster] += 1;
        }
        rows.into_iter().chain(cols).max().unwrap_or(0)
    }

    pub fn max_level(&self) -> usize {
        self.blocks.iter().map(|b| b.level).max().unwrap_or(0)
    }

    /// One line per block: `level rows.start rows.end cols.start cols.end
    /// far|near`, with half-open ranges.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for b in &self.blocks {
            writeln!(
                out,
                "{} {} {} {} {} {}",
                b.level,
                b.rows.start,
                b.rows.end,
                b.cols.start,
                b.cols.end,
                if b.far { "far" } else { "near" }
            )?;
        }
        Ok(())
    }
}

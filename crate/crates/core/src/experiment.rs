//! Rank sweeps: compress the inverse (or the triangular factors) at a list
//! of block ranks, measure the error by power iteration and fit the decay.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use crate::cluster::{Admissibility, BlockPartition, ClusterTree, DEFAULT_ETA, DEFAULT_LEAF_SIZE};
use crate::dense::{self, DenseMatrix};
use crate::fem::StiffnessMatrix;
use crate::hfactor::{ExactCholesky, ExactLu, HTriangularFactor};
use crate::hmatrix::{CompressionCache, HMatrix};
use crate::norm::{FnOperator, LinearOperator, NormEstimate, PowerIteration};
use crate::problem::Problem;
use crate::{Error, Result};

/// Errors at or below this level are treated as round-off and left out of
/// fits.
pub const ERROR_FLOOR: f64 = 1e-14;
/// Largest system for which a dense inverse is attempted.
pub const DEFAULT_MAX_DOFS: usize = 5000;
/// Tolerance on `‖A A⁻¹ - I‖_max`.
pub const INVERSE_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// `‖I - A B_H‖₂` with `B_H` the compressed inverse.
    Inverse,
    /// `‖A - L_H U_H‖₂ / ‖A‖₂`
    Lu,
    /// `‖A - C_H C_Hᵀ‖₂ / ‖A‖₂`
    Cholesky,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Inverse => "inverse",
            Target::Lu => "lu",
            Target::Cholesky => "cholesky",
        })
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse" => Ok(Target::Inverse),
            "lu" => Ok(Target::Lu),
            "cholesky" => Ok(Target::Cholesky),
            _ => Err(Error::InvalidArgument(format!("unknown target `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub n: usize,
    pub eta: f64,
    pub leaf_size: usize,
    pub mode: Admissibility,
    /// Strictly increasing.
    pub ranks: Vec<usize>,
    pub target: Target,
    pub seed: u64,
    pub max_dofs: usize,
    /// Record wall time; when off the `seconds` column is zero and the CSV
    /// is byte-reproducible.
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(problem: Problem, n: usize, ranks: Vec<usize>) -> Self {
        ExperimentConfig {
            problem,
            n,
            eta: DEFAULT_ETA,
            leaf_size: DEFAULT_LEAF_SIZE,
            mode: Admissibility::Strong,
            ranks,
            target: Target::Inverse,
            seed: 42,
            max_dofs: DEFAULT_MAX_DOFS,
            timing: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.ranks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("ranks must be strictly increasing".into()));
        }
        if self.target == Target::Cholesky && !self.problem.is_symmetric() {
            return Err(Error::InvalidArgument(format!("{} is not symmetric; Cholesky unavailable", self.problem)));
        }
        Ok(())
    }
}

/// Parses `"1..16"` (inclusive) or a comma list `"1,2,4"`.
pub fn parse_ranks(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidArgument(format!("bad rank list `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub rank: usize,
    pub error: f64,
    pub seconds: f64,
    pub storage_floats: usize,
    /// Whether the power iteration met its tolerance.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub s: f64,
    pub b: f64,
    pub prefactor: f64,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub dofs: usize,
    pub depth: usize,
    pub sparsity_constant: usize,
    pub records: Vec<ExperimentRecord>,
    pub fits: Vec<RateFit>,
}

/// Exponents tried for a `d`-dimensional problem: `1`, `1/2`, `1/(d+1)`.
pub fn candidate_exponents(dim: usize) -> Vec<f64> {
    vec![1.0, 0.5, 1.0 / (dim as f64 + 1.0)]
}

/// Least-squares fit of `ln e = ln C - b r^s` on rows above the floor.
pub fn fit_rate(records: &[ExperimentRecord], s: f64) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.error > ERROR_FLOOR)
        .map(|r| ((r.rank as f64).powf(s), r.error.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InvalidArgument(format!("{} usable rows, need at least 3", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all usable rows share one rank".into()));
    }
    let slope = sxy / sxx;
    let correlation = if syy == 0.0 { 0.0 } else { sxy / (sxx * syy).sqrt() };
    Ok(RateFit { s, b: -slope, prefactor: (my - slope * mx).exp(), correlation })
}

/// Writes the CSV: header, one row per record, then one `# b=… s=… corr=…`
/// line per fit.
pub fn emit_csv<W: Write>(records: &[ExperimentRecord], fits: &[RateFit], mut out: W) -> std::io::Result<()> {
    writeln!(out, "r,error,seconds,storage_floats")?;
    for r in records {
        writeln!(out, "{},{:e},{:.6},{}", r.rank, r.error, r.seconds, r.storage_floats)?;
    }
    for f in fits {
        writeln!(out, "# b={} s={} corr={}", f.b, f.s, f.correlation)?;
    }
    let unconverged: Vec<String> = records.iter().filter(|r| !r.converged).map(|r| r.rank.to_string()).collect();
    if !unconverged.is_empty() {
        writeln!(out, "# unconverged r={}", unconverged.join(","))?;
    }
    Ok(())
}

/// A system matrix in cluster order together with its tree and partition.
pub struct Instance {
    pub dim: usize,
    pub matrix: StiffnessMatrix,
    pub tree: ClusterTree,
    pub partition: BlockPartition,
}

impl Instance {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        let dofs = config.problem.num_dofs(config.n)?;
        if dofs > config.max_dofs {
            return Err(Error::Budget { dofs, limit: config.max_dofs });
        }
        let setup = config.problem.setup(config.n)?;
        let tree = ClusterTree::build(&setup.mesh, &setup.dofmap, config.leaf_size)?;
        let partition = BlockPartition::build(&tree, config.eta, config.mode)?;
        let matrix = setup.matrix.permuted(tree.new_of_old())?;
        Ok(Instance { dim: config.problem.dim(), matrix, tree, partition })
    }

    pub fn dense(&self) -> DenseMatrix {
        self.matrix.to_dense()
    }

    /// Dense inverse, rejected unless `‖A A⁻¹ - I‖_max ≤ 1e-8`.
    pub fn inverse(&self) -> Result<DenseMatrix> {
        let inv = dense::inverse(&self.dense())?;
        let residual = inverse_residual(&self.matrix, &inv);
        if !(residual <= INVERSE_RESIDUAL_TOL) {
            return Err(Error::Numerical(format!("inverse residual {residual:e} exceeds {INVERSE_RESIDUAL_TOL:e}")));
        }
        Ok(inv)
    }

    /// Rank sweep for the configured target.
    pub fn sweep(&self, target: Target, ranks: &[usize], power: &PowerIteration, timing: bool) -> Result<Vec<ExperimentRecord>> {
        let clock = |start: Instant| if timing { start.elapsed().as_secs_f64() } else { 0.0 };
        let max_rank = ranks.iter().copied().max().unwrap_or(0);
        let mut records = Vec::with_capacity(ranks.len());
        match target {
            Target::Inverse => {
                let inv = self.inverse()?;
                let cache = CompressionCache::new(&inv, &self.partition, max_rank)?;
                drop(inv);
                for &r in ranks {
                    let start = Instant::now();
                    let h = cache.compress(r);
                    let est = inverse_error(&self.matrix, &h, power);
                    records.push(record(r, est, clock(start), h.storage_stats().floats));
                }
            }
            Target::Lu => {
                let exact = ExactLu::new(&self.dense(), &self.tree)?;
                let norm = power.estimate(&self.matrix).value;
                for &r in ranks {
                    let start = Instant::now();
                    let (l, u) = exact.truncate(&self.partition, r)?;
                    let est = factor_error(&self.matrix, &l, &u, norm, power);
                    records.push(record(r, est, clock(start), l.storage_floats() + u.storage_floats()));
                }
            }
            Target::Cholesky => {
                let exact = ExactCholesky::new(&self.dense(), &self.tree)?;
                let norm = power.estimate(&self.matrix).value;
                for &r in ranks {
                    let start = Instant::now();
                    let c = exact.truncate(&self.partition, r)?;
                    let est = factor_error(&self.matrix, &c, &c.transpose(), norm, power);
                    records.push(record(r, est, clock(start), c.storage_floats()));
                }
            }
        }
        Ok(records)
    }
}

fn record(rank: usize, est: NormEstimate, seconds: f64, storage_floats: usize) -> ExperimentRecord {
    ExperimentRecord { rank, error: est.value, seconds, storage_floats, converged: est.converged }
}

/// `‖A X - I‖_max` using the sparse structure of `A`.
pub fn inverse_residual(a: &StiffnessMatrix, x: &DenseMatrix) -> f64 {
    let n = a.dim();
    let mut row = vec![0.0; n];
    let mtx = a.stabilization.as_ref().map(|m| {
        let mut t = vec![0.0; n];
        for (k, &mk) in m.iter().enumerate() {
            dense::axpy(mk, x.row(k), &mut t);
        }
        t
    });
    let mut worst: f64 = 0.0;
    for i in 0..n {
        row.fill(0.0);
        let (cols, vals) = a.sparse.row(i);
        for (&k, &v) in cols.iter().zip(vals) {
            dense::axpy(v, x.row(k), &mut row);
        }
        if let (Some(m), Some(t)) = (&a.stabilization, &mtx) {
            dense::axpy(m[i], t, &mut row);
        }
        row[i] -= 1.0;
        worst = row.iter().fold(worst, |w, v| w.max(v.abs()));
        if !worst.is_finite() {
            return f64::INFINITY;
        }
    }
    worst
}

/// Power-iteration estimate of `‖I - A B_H‖₂`.
pub fn inverse_error<Op: LinearOperator + ?Sized>(a: &Op, h: &HMatrix, power: &PowerIteration) -> NormEstimate {
    let n = h.size();
    let op = FnOperator {
        nrows: n,
        ncols: n,
        apply: |x: &[f64], y: &mut [f64]| {
            let mut t = vec![0.0; n];
            h.apply(x, &mut t);
            a.apply(&t, y);
            y.iter_mut().zip(x).for_each(|(yi, xi)| *yi = xi - *yi);
        },
        apply_transpose: |x: &[f64], y: &mut [f64]| {
            let mut t = vec![0.0; n];
            a.apply_transpose(x, &mut t);
            h.apply_transpose(&t, y);
            y.iter_mut().zip(x).for_each(|(yi, xi)| *yi = xi - *yi);
        },
    };
    power.estimate(&op)
}

/// Power-iteration estimate of `‖A - L U‖₂ / a_norm`.
pub fn factor_error<Op: LinearOperator + ?Sized>(
    a: &Op,
    l: &HTriangularFactor,
    u: &HTriangularFactor,
    a_norm: f64,
    power: &PowerIteration,
) -> NormEstimate {
    let n = l.size();
    let op = FnOperator {
        nrows: n,
        ncols: n,
        apply: |x: &[f64], y: &mut [f64]| {
            let (mut t, mut lu) = (vec![0.0; n], vec![0.0; n]);
            u.apply(x, &mut t);
            l.apply(&t, &mut lu);
            a.apply(x, y);
            y.iter_mut().zip(&lu).for_each(|(yi, p)| *yi -= p);
        },
        apply_transpose: |x: &[f64], y: &mut [f64]| {
            let (mut t, mut lu) = (vec![0.0; n], vec![0.0; n]);
            l.apply_transpose(x, &mut t);
            u.apply_transpose(&t, &mut lu);
            a.apply_transpose(x, y);
            y.iter_mut().zip(&lu).for_each(|(yi, p)| *yi -= p);
        },
    };
    let mut est = power.estimate(&op);
    est.value /= a_norm;
    est
}

/// Full pipeline for one configuration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let instance = Instance::from_config(config)?;
    let power = PowerIteration::with_seed(config.seed);
    let records = instance.sweep(config.target, &config.ranks, &power, config.timing)?;
    let fits = candidate_exponents(instance.dim).into_iter().filter_map(|s| fit_rate(&records, s).ok()).collect();
    Ok(ExperimentReport {
        dofs: instance.tree.len(),
        depth: instance.tree.depth(),
        sparsity_constant: instance.partition.sparsity_constant(),
        records,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(errors: impl IntoIterator<Item = (usize, f64)>) -> Vec<ExperimentRecord> {
        errors
            .into_iter()
            .map(|(rank, error)| ExperimentRecord { rank, error, seconds: 0.0, storage_floats: 0, converged: true })
            .collect()
    }

    #[test]
    fn exact_exponential_fit() {
        let recs = rows((1..=10).map(|r| (r, 3.0 * (-1.2 * r as f64).exp())));
        let fit = fit_rate(&recs, 1.0).unwrap();
        assert!((fit.b - 1.2).abs() < 1e-12);
        assert!((fit.prefactor - 3.0).abs() < 1e-10);
        assert!((fit.correlation + 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_root_fit() {
        let recs = rows((1..=12).map(|r| (r, (-2.3 * (r as f64).sqrt()).exp())));
        assert!((fit_rate(&recs, 0.5).unwrap().b - 2.3).abs() < 1e-12);
    }

    #[test]
    fn floor_rows_excluded() {
        let recs = rows([(1, 1e-3), (2, 1e-6), (3, 1e-15), (4, 1e-16)]);
        assert!(fit_rate(&recs, 1.0).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        emit_csv(&[], &[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "r,error,seconds,storage_floats\n");
        let mut buf = Vec::new();
        emit_csv(&rows([(1, 0.5), (2, 0.25)]), &[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn rank_lists() {
        assert_eq!(parse_ranks("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_ranks("2, 5").unwrap(), vec![2, 5]);
        assert!(parse_ranks("4..1").is_err());
        assert!(parse_ranks("x").is_err());
    }

    #[test]
    fn non_increasing_ranks_rejected() {
        let c = ExperimentConfig::new(Problem::Mixed2d, 8, vec![2, 2]);
        assert!(run_experiment(&c).is_err());
    }

    #[test]
    fn budget_enforced() {
        let mut c = ExperimentConfig::new(Problem::Mixed2d, 16, vec![1]);
        c.max_dofs = 100;
        assert!(matches!(run_experiment(&c), Err(Error::Budget { dofs: 256, limit: 100 })));
    }

    #[test]
    fn cholesky_needs_symmetry() {
        let mut c = ExperimentConfig::new(Problem::ConvDiffLShape, 8, vec![1]);
        c.target = Target::Cholesky;
        assert!(run_experiment(&c).is_err());
    }
}

//! Reference implementations used as independent oracles. Deliberately
//! naive: plain loops, no shared code with the library kernels.

#![allow(dead_code)]

use hinv::dense::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(m, n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

/// `B Bᵀ + n I`
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let b = random_matrix(rng, n, n);
    DenseMatrix::from_fn(n, n, |i, j| {
        let s: f64 = (0..n).map(|k| b[(i, k)] * b[(j, k)]).sum();
        s + if i == j { n as f64 } else { 0.0 }
    })
}

fn to_columns(a: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..a.ncols()).map(|j| (0..a.nrows()).map(|i| a[(i, j)]).collect()).collect()
}

/// Singular values in decreasing order by one-sided Jacobi rotations.
pub fn jacobi_singular_values(a: &DenseMatrix) -> Vec<f64> {
    let a = if a.nrows() < a.ncols() { a.transpose() } else { a.clone() };
    let mut cols = to_columns(&a);
    let n = cols.len();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..cols[p].len() {
                    let (x, y) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * x - s * y;
                    cols[q][i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Eigenvalues of a symmetric matrix, increasing, by cyclic Jacobi.
pub fn jacobi_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (x, y) = (m[k][p], m[k][q]);
                    m[k][p] = c * x - s * y;
                    m[k][q] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (m[p][k], m[q][k]);
                    m[p][k] = c * x - s * y;
                    m[q][k] = s * x + c * y;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(a: &DenseMatrix) -> DenseMatrix {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> =
        (0..n).map(|i| (0..2 * n).map(|j| if j < n { a[(i, j)] } else if j - n == i { 1.0 } else { 0.0 }).collect()).collect();
    for k in 0..n {
        let p = (k..n).max_by(|&x, &y| m[x][k].abs().total_cmp(&m[y][k].abs())).unwrap();
        m.swap(k, p);
        let pivot = m[k][k];
        assert!(pivot != 0.0, "singular input to oracle");
        for v in m[k].iter_mut() {
            *v /= pivot;
        }
        for i in 0..n {
            if i != k {
                let f = m[i][k];
                if f != 0.0 {
                    for j in 0..2 * n {
                        m[i][j] -= f * m[k][j];
                    }
                }
            }
        }
    }
    DenseMatrix::from_fn(n, n, |i, j| m[i][n + j])
}

pub fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.nrows(), b.ncols(), |i, j| (0..a.ncols()).map(|k| a[(i, k)] * b[(k, j)]).sum())
}

/// Crout-ordered unpivoted LU: `A = L U`, unit lower `L`.
pub fn crout_lu(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let n = a.nrows();
    let mut l = DenseMatrix::identity(n);
    let mut u = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            u[(i, j)] = a[(i, j)] - (0..i).map(|k| l[(i, k)] * u[(k, j)]).sum::<f64>();
        }
        for j in i + 1..n {
            l[(j, i)] = (a[(j, i)] - (0..i).map(|k| l[(j, k)] * u[(k, i)]).sum::<f64>()) / u[(i, i)];
        }
    }
    (l, u)
}

/// Schur complement by explicit inversion of the leading block.
pub fn brute_schur(a: &DenseMatrix, tau: std::ops::Range<usize>, sigma: std::ops::Range<usize>) -> DenseMatrix {
    let r = tau.start.min(sigma.start);
    let base = a.submatrix(tau.clone(), sigma.clone());
    if r == 0 {
        return base;
    }
    let inv = gauss_jordan_inverse(&a.submatrix(0..r, 0..r));
    let corr = naive_matmul(&naive_matmul(&a.submatrix(tau, 0..r), &inv), &a.submatrix(0..r, sigma));
    base.sub(&corr)
}

pub fn rel_max_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).max_abs() / b.max_abs().max(f64::MIN_POSITIVE)
}

mod common;

use common::*;
use hinv::dense::{self, DenseMatrix, Diagonal};
use hinv::norm::{spectral_norm, PowerIteration};
use hinv::problem::Problem;
use proptest::prelude::*;

#[test]
fn pivoted_lu_reconstructs_random_spd() {
    let a = random_spd(&mut rng(1), 50);
    let f = dense::lu_factor(&a).unwrap();
    let pa = DenseMatrix::from_fn(50, 50, |i, j| a[(f.perm[i], j)]);
    let lu = naive_matmul(&f.l, &f.u);
    assert!(lu.sub(&pa).max_abs() <= 1e-12 * a.max_abs());
    for i in 0..50 {
        assert_eq!(f.l[(i, i)], 1.0);
        for j in i + 1..50 {
            assert_eq!(f.l[(i, j)], 0.0);
            assert_eq!(f.u[(j, i)], 0.0);
        }
    }
}

#[test]
fn pivoted_lu_on_general_matrix() {
    let a = random_matrix(&mut rng(2), 40, 40);
    let f = dense::lu_factor(&a).unwrap();
    let pa = DenseMatrix::from_fn(40, 40, |i, j| a[(f.perm[i], j)]);
    assert!(naive_matmul(&f.l, &f.u).sub(&pa).max_abs() <= 1e-12 * a.max_abs());
}

#[test]
fn inverse_matches_gauss_jordan() {
    let a = random_spd(&mut rng(3), 30);
    assert!(rel_max_diff(&dense::inverse(&a).unwrap(), &gauss_jordan_inverse(&a)) < 1e-12);
}

#[test]
fn unpivoted_lu_matches_crout() {
    let a = random_spd(&mut rng(4), 25);
    let (l, u) = dense::lu_unpivoted(&a).unwrap();
    let (lo, uo) = crout_lu(&a);
    assert!(rel_max_diff(&l, &lo) < 1e-12);
    assert!(rel_max_diff(&u, &uo) < 1e-12);
}

#[test]
fn truncation_error_is_next_singular_value() {
    let a = random_matrix(&mut rng(5), 30, 20);
    let oracle = jacobi_singular_values(&a);
    let (f, sigma) = dense::truncated_svd(&a, 5).unwrap();
    for (s, o) in sigma.iter().zip(&oracle) {
        assert!((s - o).abs() <= 1e-12 * oracle[0]);
    }
    let err = jacobi_singular_values(&a.sub(&f.to_dense()))[0];
    assert!((err - oracle[5]).abs() <= 1e-12 * oracle[0]);
}

#[test]
fn full_rank_truncation_is_exact() {
    let a = random_matrix(&mut rng(6), 12, 7);
    let (f, _) = dense::truncated_svd(&a, 7).unwrap();
    assert!(f.to_dense().sub(&a).max_abs() < 1e-13);
    let (g, _) = dense::truncated_svd(&a, 100).unwrap();
    assert_eq!(g.rank(), 7);
}

#[test]
fn eckart_young_on_fifty_matrices() {
    let mut r = rng(7);
    for trial in 0..50 {
        let m = 8 + trial % 9;
        let n = 6 + (trial * 7) % 11;
        let a = random_matrix(&mut r, m, n);
        let oracle = jacobi_singular_values(&a);
        let svd = dense::BlockSvd::new(&a).unwrap();
        for rank in 0..=5 {
            let actual = jacobi_singular_values(&a.sub(&svd.truncate(rank).to_dense()))[0];
            let expected = oracle.get(rank).copied().unwrap_or(0.0);
            assert!((actual - expected).abs() <= 1e-11 * expected.max(oracle[0] * 1e-3), "trial {trial} r {rank}");
        }
    }
}

#[test]
fn power_iteration_matches_largest_singular_value() {
    let a = random_matrix(&mut rng(8), 40, 40);
    let est = spectral_norm(&a);
    let sigma = jacobi_singular_values(&a)[0];
    assert!(est.converged);
    assert!(((est.value - sigma) / sigma).abs() < 1e-6);
    assert!(est.value <= sigma * (1.0 + 1e-12));
}

#[test]
fn norm_of_truncation_residual_is_monotone() {
    let a = DenseMatrix::from_fn(40, 30, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
    let svd = dense::BlockSvd::new(&a).unwrap();
    let mut previous = f64::INFINITY;
    for r in 0..8 {
        let est = PowerIteration::default().estimate(&a.sub(&svd.truncate(r).to_dense())).value;
        assert!(est <= previous * (1.0 + 1e-6), "r {r}");
        previous = est;
    }
}

#[test]
fn cholesky_of_identity_and_neumann_matrix() {
    assert_eq!(dense::cholesky(&DenseMatrix::identity(5)).unwrap(), DenseMatrix::identity(5));
    let a = Problem::Neumann2d.setup(4).unwrap().matrix.to_dense();
    let l = dense::cholesky(&a).unwrap();
    assert!(rel_max_diff(&naive_matmul(&l, &l.transpose()), &a) < 1e-12);
    assert!((0..l.nrows()).all(|i| l[(i, i)] > 0.0));
}

#[test]
fn singular_pivot_rejected() {
    let a = DenseMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 1.0, 0.0, 1.0]);
    assert!(matches!(dense::lu_factor(&a), Err(hinv::Error::Singular { .. })));
    assert!(dense::inverse(&a).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lu_reconstruction(seed in any::<u64>(), n in 1usize..30) {
        let a = random_spd(&mut rng(seed), n);
        let f = dense::lu_factor(&a).unwrap();
        let pa = DenseMatrix::from_fn(n, n, |i, j| a[(f.perm[i], j)]);
        prop_assert!(naive_matmul(&f.l, &f.u).sub(&pa).max_abs() <= 1e-12 * a.max_abs());
    }

    #[test]
    fn cholesky_reconstruction(seed in any::<u64>(), n in 1usize..30) {
        let a = random_spd(&mut rng(seed), n);
        let l = dense::cholesky(&a).unwrap();
        prop_assert!(naive_matmul(&l, &l.transpose()).sub(&a).max_abs() <= 1e-12 * a.max_abs());
    }

    #[test]
    fn singular_values_agree_with_jacobi(seed in any::<u64>(), m in 1usize..15, n in 1usize..15) {
        let a = random_matrix(&mut rng(seed), m, n);
        let sv = dense::BlockSvd::new(&a).unwrap().sigma;
        let oracle = jacobi_singular_values(&a);
        for (s, o) in sv.iter().zip(&oracle) {
            prop_assert!((s - o).abs() <= 1e-12 * oracle[0].max(1.0));
        }
    }

    #[test]
    fn triangular_solves_invert_products(seed in any::<u64>(), n in 1usize..20) {
        let a = random_spd(&mut rng(seed), n);
        let l = dense::cholesky(&a).unwrap();
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let mut b: Vec<f64> = (0..n).map(|i| (0..n).map(|k| l[(i, k)] * x[k]).sum()).collect();
        dense::forward_substitute(&l, Diagonal::NonUnit, &mut b).unwrap();
        for (p, q) in b.iter().zip(&x) {
            prop_assert!((p - q).abs() < 1e-10);
        }
    }
}

mod common;

use common::*;
use hinv::cluster::{Admissibility, BlockPartition, ClusterTree};
use hinv::dense::DenseMatrix;
use hinv::experiment::{self, ExperimentConfig, Instance};
use hinv::hfactor::{self, ExactCholesky, ExactLu, HTriangularFactor, Orientation};
use hinv::norm::{LinearOperator, PowerIteration};
use hinv::problem::Problem;

fn instance(problem: Problem, n: usize, leaf: usize) -> Instance {
    let mut c = ExperimentConfig::new(problem, n, vec![1]);
    c.leaf_size = leaf;
    Instance::from_config(&c).unwrap()
}

fn line_tree(n: usize, leaf: usize) -> ClusterTree {
    let pts: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let hi: Vec<f64> = pts.iter().map(|x| x + 1.0 / n as f64).collect();
    ClusterTree::from_points(1, &pts, &pts, &hi, leaf).unwrap()
}

#[test]
fn schur_complements_match_explicit_inversion() {
    let inst = instance(Problem::Mixed2d, 6, 4);
    let a = inst.dense();
    let t = &inst.tree;
    for tau in t.nodes() {
        for sigma in t.nodes() {
            let s = hfactor::schur_complement(&a, tau.range.clone(), sigma.range.clone()).unwrap();
            let o = brute_schur(&a, tau.range.clone(), sigma.range.clone());
            assert!(s.sub(&o).max_abs() <= 1e-12 * a.max_abs());
        }
    }
}

#[test]
fn schur_recursion_on_every_cluster() {
    let inst = instance(Problem::Mixed2d, 10, 10);
    assert_eq!(inst.tree.len(), 100);
    let a = inst.dense();
    let mut checked = 0;
    for (id, c) in inst.tree.nodes().iter().enumerate() {
        if c.is_leaf() {
            assert!(hfactor::schur_recursion_check(&a, &inst.tree, id).is_err());
        } else {
            assert!(hfactor::schur_recursion_check(&a, &inst.tree, id).unwrap() <= 1e-12 * a.max_abs());
            checked += 1;
        }
    }
    assert!(checked >= 7);
}

#[test]
fn exact_lu_of_random_spd_matches_crout() {
    let a = random_spd(&mut rng(21), 8);
    let tree = line_tree(8, 2);
    assert_eq!(tree.depth(), 2);
    let f = ExactLu::new(&a, &tree).unwrap();
    let (l, u) = crout_lu(&a);
    assert!(rel_max_diff(&f.l, &l) < 1e-12);
    assert!(rel_max_diff(&f.u, &u) < 1e-12);
    let c = ExactCholesky::new(&a, &tree).unwrap().c;
    let c_oracle = DenseMatrix::from_fn(8, 8, |i, j| l[(i, j)] * u[(j, j)].sqrt());
    assert!(rel_max_diff(&c, &c_oracle) < 1e-12);
}

#[test]
fn diagonal_matrix_factors_trivially() {
    let d: Vec<f64> = (1..=12).map(|i| i as f64).collect();
    let a = DenseMatrix::from_fn(12, 12, |i, j| if i == j { d[i] } else { 0.0 });
    let tree = line_tree(12, 3);
    let f = ExactLu::new(&a, &tree).unwrap();
    assert_eq!(f.l, DenseMatrix::identity(12));
    assert_eq!(f.u, a);
    let c = ExactCholesky::new(&a, &tree).unwrap().c;
    for i in 0..12 {
        assert!((c[(i, i)] - d[i].sqrt()).abs() < 1e-15);
    }
}

#[test]
fn full_rank_factors_reproduce_matrix() {
    let inst = instance(Problem::Neumann2d, 12, 16);
    let a = inst.dense();
    let (l, u) = hfactor::hlu_factorize(&a, &inst.tree, &inst.partition, usize::MAX).unwrap();
    assert!(rel_max_diff(&naive_matmul(&l.to_dense(), &u.to_dense()), &a) < 1e-12);
    let c = hfactor::hcholesky_factorize(&a, &inst.tree, &inst.partition, usize::MAX).unwrap();
    let cd = c.to_dense();
    assert!(rel_max_diff(&naive_matmul(&cd, &cd.transpose()), &a) < 1e-12);
    let (lo, uo) = crout_lu(&a);
    assert!(rel_max_diff(&l.to_dense(), &lo) < 1e-10);
    assert!(rel_max_diff(&u.to_dense(), &uo) < 1e-10);
}

#[test]
fn restriction_commutes_with_inversion() {
    let inst = instance(Problem::Mixed2d, 12, 12);
    let a = inst.dense();
    let (l, _) = hfactor::hlu_factorize(&a, &inst.tree, &inst.partition, 3).unwrap();
    let linv = gauss_jordan_inverse(&l.to_dense());
    for c in inst.tree.nodes() {
        let sub = l.restrict(c.range.clone()).unwrap();
        assert_eq!(sub.to_dense(), l.to_dense().submatrix(c.range.clone(), c.range.clone()));
        let expected = linv.submatrix(c.range.clone(), c.range.clone());
        assert!(rel_max_diff(&gauss_jordan_inverse(&sub.to_dense()), &expected) < 1e-10);
    }
}

#[test]
fn factor_error_decreases_with_rank() {
    let inst = instance(Problem::Mixed2d, 16, 25);
    let a = inst.dense();
    let power = PowerIteration::default();
    let a_norm = power.estimate(&inst.matrix).value;
    let lu = ExactLu::new(&a, &inst.tree).unwrap();
    let mut previous = f64::INFINITY;
    for r in [1, 2, 4, 6, 8] {
        let (l, u) = lu.truncate(&inst.partition, r).unwrap();
        let err = experiment::factor_error(&inst.matrix, &l, &u, a_norm, &power).value;
        assert!(err <= previous * 1.01 || err < 1e-14, "r {r}: {err} after {previous}");
        previous = err;
    }
    assert!(previous < 1e-6);
}

#[test]
fn identity_factor_solves_trivially() {
    let tree = line_tree(16, 4);
    let p = BlockPartition::build(&tree, 2.0, Admissibility::Strong).unwrap();
    let id = DenseMatrix::identity(16);
    let x: Vec<f64> = (0..16).map(|i| i as f64 * 0.5 - 2.0).collect();
    for orientation in [Orientation::Lower, Orientation::Upper] {
        let f = HTriangularFactor::from_dense(&id, &p, orientation, true, 2).unwrap();
        assert_eq!(f.solve(&x).unwrap(), x);
        assert_eq!(f.solve_transpose(&x).unwrap(), x);
    }
}

#[test]
fn hand_computed_lower_solve() {
    // [1 0 0; 2 1 0; -1 3 1] x = [1, 4, 8]  =>  x = [1, 2, 3]
    let l = DenseMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 2.0, 1.0, 0.0, -1.0, 3.0, 1.0]);
    let tree = line_tree(3, 1);
    let p = BlockPartition::build(&tree, 2.0, Admissibility::Strong).unwrap();
    let f = HTriangularFactor::from_dense(&l, &p, Orientation::Lower, true, usize::MAX).unwrap();
    let x = f.solve(&[1.0, 4.0, 8.0]).unwrap();
    assert_eq!(x, vec![1.0, 2.0, 3.0]);
    // Lᵀ y = [1, 2, 3] by back substitution:
    // y3 = 3, y2 = 2 - 3·3 = -7, y1 = 1 - 2·(-7) + 3 = 18
    assert_eq!(f.solve_transpose(&[1.0, 2.0, 3.0]).unwrap(), vec![18.0, -7.0, 3.0]);
}

#[test]
fn triangular_solve_agrees_with_operator() {
    let inst = instance(Problem::ConvDiffLShape, 16, 20);
    let a = inst.dense();
    let (l, u) = hfactor::hlu_factorize(&a, &inst.tree, &inst.partition, 5).unwrap();
    let x = random_matrix(&mut rng(4), 1, a.nrows()).row(0).to_vec();
    for f in [&l, &u] {
        let mut y = vec![0.0; x.len()];
        f.apply(&x, &mut y);
        let back = f.solve(&y).unwrap();
        assert!(back.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-9));
        f.apply_transpose(&x, &mut y);
        let back = f.solve_transpose(&y).unwrap();
        assert!(back.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-9));
    }
    assert!(l.storage_floats() < a.nrows() * a.nrows());
}

#[test]
fn cholesky_rejects_indefinite_input() {
    let tree = line_tree(4, 2);
    let a = DenseMatrix::from_fn(4, 4, |i, j| if i == j { if i == 2 { -1.0 } else { 2.0 } } else { 0.0 });
    assert!(matches!(ExactCholesky::new(&a, &tree), Err(hinv::Error::NotPositiveDefinite { index: 2, .. })));
}

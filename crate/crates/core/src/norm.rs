//! Spectral norm estimation by power iteration on `MᵀM`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A linear map available only through products with itself and its
/// transpose.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `y = M x`
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `y = Mᵀ x`
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]);
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }
    fn ncols(&self) -> usize {
        (**self).ncols()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply_transpose(x, y)
    }
}

/// Operator given by a pair of closures.
pub struct FnOperator<F, G> {
    pub nrows: usize,
    pub ncols: usize,
    pub apply: F,
    pub apply_transpose: G,
}

impl<F, G> LinearOperator for FnOperator<F, G>
where
    F: Fn(&[f64], &mut [f64]),
    G: Fn(&[f64], &mut [f64]),
{
    fn nrows(&self) -> usize {
        self.nrows
    }
    fn ncols(&self) -> usize {
        self.ncols
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.apply)(x, y)
    }
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        (self.apply_transpose)(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    pub seed: u64,
    /// Stop once the relative change of the estimate drops below this.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration { seed: 42, rel_tol: 1e-8, max_iter: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    /// `‖M x‖` for the final unit iterate; a lower bound on `‖M‖₂`.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl PowerIteration {
    pub fn with_seed(seed: u64) -> Self {
        PowerIteration { seed, ..Self::default() }
    }

    pub fn estimate<Op: LinearOperator + ?Sized>(&self, op: &Op) -> NormEstimate {
        let (m, n) = (op.nrows(), op.ncols());
        if m == 0 || n == 0 {
            return NormEstimate { value: 0.0, iterations: 0, converged: true };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        normalize(&mut x);
        let mut y = vec![0.0; m];
        let mut z = vec![0.0; n];
        let mut previous = 0.0;
        for it in 1..=self.max_iter {
            op.apply(&x, &mut y);
            let value = norm2(&y);
            if value == 0.0 {
                return NormEstimate { value: 0.0, iterations: it, converged: true };
            }
            if it > 1 && (value - previous).abs() <= self.rel_tol * value {
                return NormEstimate { value, iterations: it, converged: true };
            }
            previous = value;
            op.apply_transpose(&y, &mut z);
            if norm2(&z) == 0.0 {
                return NormEstimate { value, iterations: it, converged: true };
            }
            std::mem::swap(&mut x, &mut z);
            normalize(&mut x);
        }
        NormEstimate { value: previous, iterations: self.max_iter, converged: false }
    }
}

/// Power-iteration estimate of `‖M‖₂` with the default settings.
pub fn spectral_norm<Op: LinearOperator + ?Sized>(op: &Op) -> NormEstimate {
    PowerIteration::default().estimate(op)
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(x: &mut [f64]) {
    let s = norm2(x);
    if s > 0.0 {
        x.iter_mut().for_each(|v| *v /= s);
    }
}

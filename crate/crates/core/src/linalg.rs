//! Small dense linear-algebra helpers.
//!
//! All d×d factorizations in the crate go through [`cholesky`], which bumps a
//! thread-local counter. The harness reads the counter around arm selection
//! so that "this policy never factorizes a d×d matrix" is checkable at run
//! time, not just by reading the code.

use std::cell::Cell;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

thread_local! {
    static FACTORIZATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of d×d factorizations performed on this thread so far.
pub fn factorization_count() -> u64 {
    FACTORIZATIONS.with(Cell::get)
}

/// Cholesky factorization of a symmetric positive definite matrix.
pub fn cholesky(matrix: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    FACTORIZATIONS.with(|c| c.set(c.get() + 1));
    matrix.clone().cholesky().ok_or_else(|| Error::Numerical {
        message: format!("{0}x{0} matrix is not positive definite", matrix.nrows()),
        condition: condition_estimate(matrix),
    })
}

/// λ_max / λ_min from a full eigendecomposition. Only used on error paths and
/// in oracles, never on a hot path.
pub fn condition_estimate(matrix: &DMatrix<f64>) -> Option<f64> {
    if matrix.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let eig = SymmetricEigen::new(matrix.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    Some(if min > 0.0 { max / min } else { f64::INFINITY })
}

pub const POWER_ITERATIONS: usize = 50;
pub const POWER_TOL: f64 = 1e-8;

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
///
/// Returns the Rayleigh quotient of the final iterate, which never exceeds
/// the true λ_max.
pub fn power_iteration(matrix: &DMatrix<f64>, max_iters: usize, tol: f64) -> f64 {
    let n = matrix.nrows();
    if n == 0 {
        return 0.0;
    }
    // Slightly uneven start so the iterate is not orthogonal to the top
    // eigenvector of structured matrices.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 1e-3 * ((i % 7) as f64));
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..max_iters {
        let w = matrix * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - estimate).abs() <= tol * next.abs().max(1.0) {
            estimate = next;
            break;
        }
        estimate = next;
    }
    let w = matrix * &v;
    v.dot(&w).max(estimate)
}

/// (λ_min, λ_max) of a symmetric PSD matrix by power iteration on the matrix
/// and on its spectral complement `λ_max·I − M`.
pub fn extreme_eigenvalues(matrix: &DMatrix<f64>) -> (f64, f64) {
    let max = power_iteration(matrix, POWER_ITERATIONS, POWER_TOL);
    let n = matrix.nrows();
    let shifted = DMatrix::identity(n, n) * max - matrix;
    let gap = power_iteration(&shifted, POWER_ITERATIONS, POWER_TOL);
    (max - gap, max)
}

/// Index of the largest score, lowest index on ties. NaN never wins.
pub fn argmax_lowest<I>(scores: I) -> usize
where
    I: IntoIterator<Item = f64>,
{
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.into_iter().enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// Integer matrix power by repeated squaring.
pub fn matrix_power(matrix: &DMatrix<f64>, mut exponent: usize) -> DMatrix<f64> {
    let n = matrix.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut base = matrix.clone();
    while exponent > 0 {
        if exponent & 1 == 1 {
            result = &result * &base;
        }
        exponent >>= 1;
        if exponent > 0 {
            base = &base * &base;
        }
    }
    result
}

/// `Σ_{l=0}^{terms-1} M^l` by doubling, without inverting `I − M`.
pub fn geometric_sum(matrix: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let n = matrix.nrows();
    // Invariant: `sum = Σ_{l<len} M^l` and `power = M^len`.
    fn go(m: &DMatrix<f64>, terms: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = m.nrows();
        if terms == 0 {
            return (DMatrix::zeros(n, n), DMatrix::identity(n, n));
        }
        let (half_sum, half_pow) = go(m, terms / 2);
        let mut sum = &half_sum + &half_pow * &half_sum;
        let mut pow = &half_pow * &half_pow;
        if terms % 2 == 1 {
            sum = DMatrix::identity(n, n) + m * sum;
            pow = m * pow;
        }
        (sum, pow)
    }
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    go(matrix, terms).0
}

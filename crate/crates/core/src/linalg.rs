use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Relative pivot floor below which a Gram matrix is treated as singular.
const PIVOT_TOL: f64 = 1e-10;

/// Cholesky factor of a symmetric positive definite matrix, rejecting
/// numerically singular input.
pub(crate) fn cholesky(a: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let chol = Cholesky::new(a.clone())?;
    let l = chol.l_dirty();
    let min_pivot = (0..a.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if min_pivot < PIVOT_TOL * scale {
        return None;
    }
    Some(chol)
}

/// Draws from `N(P^{-1} b, P^{-1})` given precision `P` and `b`.
pub(crate) fn sample_gaussian_canonical<R: Rng + ?Sized>(
    precision: &DMatrix<f64>,
    b: &DVector<f64>,
    rng: &mut R,
) -> Option<DVector<f64>> {
    let chol = cholesky(precision)?;
    let mean = chol.solve(b);
    let eps = DVector::from_fn(b.len(), |_, _| StandardNormal.sample(rng));
    // L' u = eps gives u ~ N(0, P^{-1})
    let u = chol.l().transpose().solve_upper_triangular(&eps)?;
    Some(mean + u)
}

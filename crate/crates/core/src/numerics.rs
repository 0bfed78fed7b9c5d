//! Dense linear algebra and finite-difference helpers shared by the rest of the crate.
//!
//! Problem sizes here are at most a few hundred unknowns, so everything is dense
//! and backed by `nalgebra`. Factorizations are Cholesky; extreme eigenvalues come
//! from a full symmetric eigendecomposition.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Default step for central finite differences.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

pub(crate) fn ensure_len(v: &Vector, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

fn ensure_square(a: &Matrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    Ok(())
}

/// A Cholesky factor that can be reused for several right-hand sides.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(a: &Matrix) -> Result<Self> {
        ensure_square(a)?;
        let chol = Cholesky::new(a.clone()).ok_or(Error::NotSpd)?;
        Ok(Self { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, b: &Vector) -> Result<Vector> {
        ensure_len(b, self.dim())?;
        Ok(self.chol.solve(b))
    }

    pub fn solve_matrix(&self, b: &Matrix) -> Result<Matrix> {
        if b.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: b.nrows(),
            });
        }
        Ok(self.chol.solve(b))
    }

    pub fn inverse(&self) -> Matrix {
        self.chol.inverse()
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn spd_solve(a: &Matrix, b: &Vector) -> Result<Vector> {
    ensure_square(a)?;
    ensure_len(b, a.nrows())?;
    SpdFactor::new(a)?.solve(b)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eig_extremes(a: &Matrix) -> Result<(f64, f64)> {
    ensure_square(a)?;
    if a.nrows() == 0 {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    let eig = a.clone().symmetric_eigenvalues();
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// Central-difference gradient of a scalar field.
pub fn finite_diff_grad<F>(f: F, x: &Vector, h: f64) -> Vector
where
    F: Fn(&Vector) -> f64,
{
    let mut probe = x.clone();
    Vector::from_fn(x.len(), |j, _| {
        let orig = probe[j];
        probe[j] = orig + h;
        let up = f(&probe);
        probe[j] = orig - h;
        let down = f(&probe);
        probe[j] = orig;
        (up - down) / (2.0 * h)
    })
}

/// Fallible variant of [`finite_diff_grad`]; the first evaluation error is returned.
pub fn try_finite_diff_grad<F>(f: F, x: &Vector, h: f64) -> Result<Vector>
where
    F: Fn(&Vector) -> Result<f64>,
{
    let mut probe = x.clone();
    let mut out = Vector::zeros(x.len());
    for j in 0..x.len() {
        let orig = probe[j];
        probe[j] = orig + h;
        let up = f(&probe)?;
        probe[j] = orig - h;
        let down = f(&probe)?;
        probe[j] = orig;
        out[j] = (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// Central-difference Jacobian of a vector field; column `j` is the derivative along `e_j`.
pub fn finite_diff_jacobian<F>(f: F, x: &Vector, h: f64) -> Result<Matrix>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    let mut probe = x.clone();
    let mut cols = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let orig = probe[j];
        probe[j] = orig + h;
        let up = f(&probe)?;
        probe[j] = orig - h;
        let down = f(&probe)?;
        probe[j] = orig;
        cols.push((up - down) / (2.0 * h));
    }
    if cols.is_empty() {
        return Ok(Matrix::zeros(0, 0));
    }
    Ok(Matrix::from_columns(&cols))
}

/// Symmetric part `(A + Aᵀ)/2`.
pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn spd_solve_identity() {
        let x = spd_solve(&Matrix::identity(2, 2), &Vector::from_vec(vec![3.0, -1.0])).unwrap();
        assert_eq!(x.as_slice(), &[3.0, -1.0]);
    }

    #[test]
    fn spd_solve_diagonal() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let x = spd_solve(&a, &Vector::from_vec(vec![2.0, 4.0])).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn spd_solve_coupled_2x2() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let b = Vector::from_vec(vec![3.0, 3.0]);
        let x = spd_solve(&a, &b).unwrap();
        assert!((&a * &x - &b).norm() <= 1e-10 * (1.0 + b.norm()));
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spd_solve_rejects_indefinite() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = spd_solve(&a, &Vector::from_vec(vec![1.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::NotSpd));
    }

    #[test]
    fn spd_solve_rejects_bad_dims() {
        let err = spd_solve(&Matrix::identity(2, 2), &Vector::zeros(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        let err = spd_solve(&Matrix::zeros(2, 3), &Vector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn eig_extremes_examples() {
        assert_eq!(eig_extremes(&Matrix::identity(3, 3)).unwrap(), (1.0, 1.0));
        let (lo, hi) = eig_extremes(&Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 5.0]))).unwrap();
        assert_abs_diff_eq!(lo, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(hi, 5.0, epsilon = 1e-14);
        let (lo, hi) = eig_extremes(&Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert_abs_diff_eq!(lo, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 3.0, epsilon = 1e-12);
        assert!(eig_extremes(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn finite_diff_examples() {
        let g = finite_diff_grad(|x| x[0] * x[0], &Vector::from_vec(vec![1.0]), DEFAULT_FD_STEP);
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-8);
        let g = finite_diff_grad(|_| 7.0, &Vector::from_vec(vec![0.3, -2.0]), DEFAULT_FD_STEP);
        assert_eq!(g, Vector::zeros(2));
        let g = finite_diff_grad(|x| x[0] * x[1], &Vector::from_vec(vec![2.0, 3.0]), DEFAULT_FD_STEP);
        assert_abs_diff_eq!(g[0], 3.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g[1], 2.0, epsilon = 1e-8);
    }

    fn random_spd(dim: usize, seed: u64) -> Matrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = Matrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        &g * g.transpose() + Matrix::identity(dim, dim) * (0.1 * dim as f64)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn spd_solve_recovers_x(dim in 1usize..200, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let a = random_spd(dim, seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
            let x = Vector::from_fn(dim, |_, _| rng.random_range(-5.0..5.0));
            let got = spd_solve(&a, &(&a * &x)).unwrap();
            prop_assert!((&got - &x).norm() <= 1e-9 * (1.0 + x.norm()));
        }

        #[test]
        fn eig_extremes_bound_quadratic_forms(dim in 1usize..40, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let a = random_spd(dim, seed) - Matrix::identity(dim, dim) * 2.0;
            let (lo, hi) = eig_extremes(&a).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            for _ in 0..20 {
                let v = Vector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
                let q = v.dot(&(&a * &v));
                let vv = v.dot(&v);
                let tol = 1e-9 * hi.abs().max(lo.abs()).max(1.0) * vv;
                prop_assert!(q >= lo * vv - tol);
                prop_assert!(q <= hi * vv + tol);
            }
        }
    }
}

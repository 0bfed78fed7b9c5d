//! Local objectives `f_i` with analytic derivatives, and the consensus problem they form.

use std::fmt;
use std::sync::Arc;

use crate::data::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::numerics::{eig_extremes, ensure_len, Matrix, Vector};

/// Probabilities inside the logistic loss are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-12;

/// Hessian eigenvalue bounds `m I ⪯ ∇²f ⪯ l I`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Curvature {
    pub m: f64,
    pub l: f64,
}

/// A twice-differentiable, strongly convex local objective.
///
/// The unchecked methods expect `x.len() == self.dim()`; use [`eval`] for a
/// dimension-checked call.
pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    fn hessian(&self, x: &Vector) -> Matrix;

    /// Raw eigenvalue bounds; [`convexity_constants`] validates them.
    fn curvature(&self) -> Result<Curvature>;

    /// Number of local data points (used for sample-weighted averaging).
    fn sample_count(&self) -> usize;

    fn hessian_is_constant(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vector,
    pub hessian: Matrix,
}

pub fn eval(obj: &dyn Objective, x: &Vector) -> Result<Evaluation> {
    ensure_len(x, obj.dim())?;
    Ok(Evaluation {
        value: obj.value(x),
        gradient: obj.gradient(x),
        hessian: obj.hessian(x),
    })
}

/// `(m_i, l_i)` for one objective; rejects objectives that are not strongly convex.
///
/// A lower bound below `1e-12 · l` is treated as zero, since rank-deficient
/// Gram matrices only produce rounding-level eigenvalues.
pub fn convexity_constants(obj: &dyn Objective) -> Result<Curvature> {
    let c = obj.curvature()?;
    if !(c.m > 1e-12 * c.l.abs()) || !c.m.is_finite() || !c.l.is_finite() {
        return Err(Error::NotStronglyConvex { m: c.m, l: c.l });
    }
    Ok(c)
}

/// `f(x) = (1/(2N))‖A x − b‖² + (ρ/2)‖x‖²`, stored through its Gram form.
#[derive(Clone, Debug)]
pub struct QuadraticObjective {
    gram: Matrix,
    linear: Vector,
    constant: f64,
    ridge: f64,
    samples: usize,
}

impl QuadraticObjective {
    /// Normalizes by the number of rows of `design`.
    pub fn new(design: &Matrix, response: &Vector, ridge: f64) -> Result<Self> {
        Self::with_normalizer(design, response, design.nrows() as f64, ridge)
    }

    /// Uses an explicit normalizer `N` in place of the row count.
    pub fn with_normalizer(design: &Matrix, response: &Vector, normalizer: f64, ridge: f64) -> Result<Self> {
        ensure_len(response, design.nrows())?;
        if !(normalizer > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "normalizer must be positive, got {normalizer}"
            )));
        }
        if !(ridge >= 0.0) {
            return Err(Error::InvalidArgument(format!("ridge share must be >= 0, got {ridge}")));
        }
        let gram = design.tr_mul(design) / normalizer;
        let linear = design.tr_mul(response) / normalizer;
        let constant = response.norm_squared() / (2.0 * normalizer);
        Ok(Self {
            gram,
            linear,
            constant,
            ridge,
            samples: design.nrows(),
        })
    }

    /// `AᵀA / N`.
    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    /// `Aᵀb / N`.
    pub fn linear_term(&self) -> &Vector {
        &self.linear
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.gram.nrows()
    }

    fn value(&self, x: &Vector) -> f64 {
        let gx = &self.gram * x;
        0.5 * x.dot(&gx) - self.linear.dot(x) + self.constant + 0.5 * self.ridge * x.norm_squared()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        &self.gram * x - &self.linear + x * self.ridge
    }

    fn hessian(&self, _x: &Vector) -> Matrix {
        let d = self.dim();
        &self.gram + Matrix::identity(d, d) * self.ridge
    }

    fn curvature(&self) -> Result<Curvature> {
        let (m, l) = eig_extremes(&self.hessian(&Vector::zeros(self.dim())))?;
        Ok(Curvature { m, l })
    }

    fn sample_count(&self) -> usize {
        self.samples
    }

    fn hessian_is_constant(&self) -> bool {
        true
    }
}

/// Mean cross-entropy of a logistic model plus `(ρ/2)‖x‖²`.
///
/// Rows of `features` are samples; labels are `0.0` or `1.0`.
#[derive(Clone, Debug)]
pub struct LogisticObjective {
    features: Matrix,
    labels: Vector,
    ridge: f64,
    normalizer: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticObjective {
    pub fn new(features: Matrix, labels: Vector, ridge: f64) -> Result<Self> {
        let n = features.nrows() as f64;
        Self::with_normalizer(features, labels, n, ridge)
    }

    pub fn with_normalizer(features: Matrix, labels: Vector, normalizer: f64, ridge: f64) -> Result<Self> {
        ensure_len(&labels, features.nrows())?;
        if features.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "logistic labels must be 0 or 1, got {bad}"
            )));
        }
        if !(normalizer > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "normalizer must be positive, got {normalizer}"
            )));
        }
        Ok(Self {
            features,
            labels,
            ridge,
            normalizer,
        })
    }

    fn probabilities(&self, x: &Vector) -> Vector {
        (&self.features * x).map(sigmoid)
    }
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn value(&self, x: &Vector) -> f64 {
        let probs = self.probabilities(x);
        let loss: f64 = probs
            .iter()
            .zip(self.labels.iter())
            .map(|(&h, &y)| {
                let h = h.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                -y * h.ln() - (1.0 - y) * (1.0 - h).ln()
            })
            .sum();
        loss / self.normalizer + 0.5 * self.ridge * x.norm_squared()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let resid = self.probabilities(x) - &self.labels;
        self.features.tr_mul(&resid) / self.normalizer + x * self.ridge
    }

    fn hessian(&self, x: &Vector) -> Matrix {
        let probs = self.probabilities(x);
        let mut weighted = self.features.clone();
        for (mut row, h) in weighted.row_iter_mut().zip(probs.iter()) {
            row *= h * (1.0 - h);
        }
        let d = self.dim();
        self.features.tr_mul(&weighted) / self.normalizer + Matrix::identity(d, d) * self.ridge
    }

    fn curvature(&self) -> Result<Curvature> {
        let (_, top) = eig_extremes(&self.features.tr_mul(&self.features))?;
        Ok(Curvature {
            m: self.ridge,
            l: top / (4.0 * self.normalizer) + self.ridge,
        })
    }

    fn sample_count(&self) -> usize {
        self.features.nrows()
    }
}

/// `n` local objectives sharing one dimension, plus the penalty `μ`.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    objectives: Vec<Arc<dyn Objective>>,
    mu: f64,
}

impl ProblemInstance {
    pub fn new(objectives: Vec<Arc<dyn Objective>>, mu: f64) -> Result<Self> {
        let first = objectives
            .first()
            .ok_or_else(|| Error::InvalidArgument("problem needs at least one client".into()))?;
        let d = first.dim();
        if let Some(bad) = objectives.iter().find(|o| o.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.dim(),
            });
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidArgument(format!("penalty mu must be positive, got {mu}")));
        }
        Ok(Self { objectives, mu })
    }

    /// Ridge regression with the global penalty `rho` split evenly over clients.
    pub fn ridge_regression(ds: &Dataset, partition: &Partition, rho: f64, mu: f64) -> Result<Self> {
        let share = rho / partition.num_clients() as f64;
        let objectives = partition
            .clients()
            .iter()
            .map(|rows| {
                let (a, b) = ds.select(rows);
                Ok(Arc::new(QuadraticObjective::new(&a, &b, share)?) as Arc<dyn Objective>)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(objectives, mu)
    }

    /// Regularized logistic regression with the global penalty split evenly.
    pub fn logistic_regression(ds: &Dataset, partition: &Partition, rho: f64, mu: f64) -> Result<Self> {
        let share = rho / partition.num_clients() as f64;
        let objectives = partition
            .clients()
            .iter()
            .map(|rows| {
                let (x, y) = ds.select(rows);
                Ok(Arc::new(LogisticObjective::new(x, y, share)?) as Arc<dyn Objective>)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(objectives, mu)
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(self.objectives.clone(), mu)
    }

    pub fn n(&self) -> usize {
        self.objectives.len()
    }

    pub fn dim(&self) -> usize {
        self.objectives[0].dim()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn objectives(&self) -> &[Arc<dyn Objective>] {
        &self.objectives
    }

    pub fn objective(&self, i: usize) -> &dyn Objective {
        self.objectives[i].as_ref()
    }

    pub fn all_quadratic(&self) -> bool {
        self.objectives.iter().all(|o| o.hessian_is_constant())
    }

    pub fn curvatures(&self) -> Result<Vec<Curvature>> {
        self.objectives
            .iter()
            .map(|o| convexity_constants(o.as_ref()))
            .collect()
    }

    /// Global `m = min m_i` and `l = max l_i`.
    pub fn global_curvature(&self) -> Result<Curvature> {
        let cs = self.curvatures()?;
        Ok(Curvature {
            m: cs.iter().map(|c| c.m).fold(f64::INFINITY, f64::min),
            l: cs.iter().map(|c| c.l).fold(f64::NEG_INFINITY, f64::max),
        })
    }

    /// `Σ f_i(ω)`.
    pub fn total_value(&self, omega: &Vector) -> f64 {
        self.objectives.iter().map(|o| o.value(omega)).sum()
    }

    pub fn total_gradient(&self, omega: &Vector) -> Vector {
        self.objectives
            .iter()
            .fold(Vector::zeros(self.dim()), |acc, o| acc + o.gradient(omega))
    }

    pub fn total_hessian(&self, omega: &Vector) -> Matrix {
        let d = self.dim();
        self.objectives
            .iter()
            .fold(Matrix::zeros(d, d), |acc, o| acc + o.hessian(omega))
    }

    /// `f(x) = Σ f_i(x_i)` for per-client points.
    pub fn separable_value(&self, xs: &[Vector]) -> f64 {
        self.objectives.iter().zip(xs).map(|(o, x)| o.value(x)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, finite_diff_jacobian, DEFAULT_FD_STEP};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn m(r: usize, c: usize, xs: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, xs)
    }

    #[test]
    fn quadratic_constants() {
        let q = QuadraticObjective::with_normalizer(&Matrix::identity(3, 3), &Vector::zeros(3), 1.0, 0.0).unwrap();
        let c = convexity_constants(&q).unwrap();
        assert_abs_diff_eq!(c.m, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.l, 1.0, epsilon = 1e-14);

        let q =
            QuadraticObjective::with_normalizer(&m(2, 2, &[1.0, 0.0, 0.0, 2.0]), &Vector::zeros(2), 1.0, 0.5).unwrap();
        let c = convexity_constants(&q).unwrap();
        assert_abs_diff_eq!(c.m, 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(c.l, 4.5, epsilon = 1e-14);
    }

    #[test]
    fn logistic_constants() {
        let lg = LogisticObjective::new(m(1, 1, &[2.0]), v(&[1.0]), 0.1).unwrap();
        let c = convexity_constants(&lg).unwrap();
        assert_abs_diff_eq!(c.m, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(c.l, 1.1, epsilon = 1e-14);
    }

    #[test]
    fn rank_deficient_without_ridge_is_rejected() {
        let a = m(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let q = QuadraticObjective::new(&a, &v(&[1.0, 2.0, 3.0]), 0.0).unwrap();
        assert!(matches!(convexity_constants(&q), Err(Error::NotStronglyConvex { .. })));
        let lg = LogisticObjective::new(m(1, 1, &[1.0]), v(&[0.0]), 0.0).unwrap();
        assert!(matches!(convexity_constants(&lg), Err(Error::NotStronglyConvex { .. })));
    }

    #[test]
    fn eval_examples() {
        let q = QuadraticObjective::new(&m(1, 1, &[1.0]), &v(&[0.0]), 0.0).unwrap();
        let e = eval(&q, &v(&[3.0])).unwrap();
        assert_abs_diff_eq!(e.value, 4.5, epsilon = 1e-14);
        assert_abs_diff_eq!(e.gradient[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.hessian[(0, 0)], 1.0, epsilon = 1e-14);

        let q = QuadraticObjective::new(&m(1, 1, &[1.0]), &v(&[2.0]), 0.0).unwrap();
        let e = eval(&q, &v(&[0.0])).unwrap();
        assert_abs_diff_eq!(e.value, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.gradient[0], -2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.hessian[(0, 0)], 1.0, epsilon = 1e-14);

        let lg = LogisticObjective::new(m(1, 1, &[0.0]), v(&[0.0]), 1.0).unwrap();
        let e = eval(&lg, &v(&[0.0])).unwrap();
        assert_abs_diff_eq!(e.value, 2f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(e.gradient[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.hessian[(0, 0)], 1.0, epsilon = 1e-14);

        assert!(matches!(
            eval(&lg, &v(&[0.0, 1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn logistic_rejects_non_binary_labels() {
        assert!(LogisticObjective::new(m(1, 1, &[1.0]), v(&[0.5]), 0.1).is_err());
    }

    fn random_objectives(seed: u64) -> Vec<Box<dyn Objective>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, d) = (12, 4);
        let a = Matrix::from_fn(rows, d, |_, _| rng.random_range(-1.0..1.0));
        let b = Vector::from_fn(rows, |_, _| rng.random_range(-2.0..2.0));
        let y = Vector::from_fn(rows, |i, _| (i % 2) as f64);
        vec![
            Box::new(QuadraticObjective::new(&a, &b, 0.3).unwrap()),
            Box::new(LogisticObjective::new(a.clone(), y, 0.05).unwrap()),
        ]
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for obj in random_objectives(11) {
            let c = convexity_constants(obj.as_ref()).unwrap();
            for _ in 0..100 {
                let x = Vector::from_fn(obj.dim(), |_, _| rng.random_range(-2.0..2.0));
                let fd = finite_diff_grad(|p| obj.value(p), &x, DEFAULT_FD_STEP);
                assert!((fd - obj.gradient(&x)).amax() <= 1e-5);
                let fh = finite_diff_jacobian(|p| Ok(obj.gradient(p)), &x, DEFAULT_FD_STEP).unwrap();
                assert!((fh - obj.hessian(&x)).amax() <= 1e-4);
                let (lo, hi) = eig_extremes(&obj.hessian(&x)).unwrap();
                assert!(lo >= c.m - 1e-9 && hi <= c.l + 1e-9, "{lo} {hi} {c:?}");
            }
        }
    }

    #[test]
    fn problem_validation() {
        let q: Arc<dyn Objective> =
            Arc::new(QuadraticObjective::new(&Matrix::identity(2, 2), &Vector::zeros(2), 0.0).unwrap());
        let r: Arc<dyn Objective> =
            Arc::new(QuadraticObjective::new(&Matrix::identity(3, 3), &Vector::zeros(3), 0.0).unwrap());
        assert!(ProblemInstance::new(vec![], 1.0).is_err());
        assert!(ProblemInstance::new(vec![q.clone()], 0.0).is_err());
        assert!(matches!(
            ProblemInstance::new(vec![q.clone(), r], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        let p = ProblemInstance::new(vec![q.clone(), q], 2.0).unwrap();
        assert_eq!((p.n(), p.dim(), p.mu()), (2, 2, 2.0));
        assert!(p.all_quadratic());
    }
}

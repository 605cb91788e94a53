//! Arm features, arm sets and interaction histories.

use std::ops::Deref;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Feature vector of a single arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmFeature(DVector<f64>);

impl ArmFeature {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("arm feature must have dimension >= 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("arm feature has non-finite entries"));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for ArmFeature {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Non-empty ordered set of arms sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSet {
    arms: Vec<ArmFeature>,
}

impl ArmSet {
    pub fn new(arms: Vec<ArmFeature>) -> Result<Self> {
        let Some(first) = arms.first() else {
            return Err(Error::invalid("arm set must be non-empty"));
        };
        let dim = first.dim();
        for arm in &arms {
            check_dim(dim, arm.dim())?;
        }
        Ok(Self { arms })
    }

    pub fn dim(&self) -> usize {
        self.arms[0].dim()
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, index: usize) -> Option<&ArmFeature> {
        self.arms.get(index)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ArmFeature> {
        self.arms.iter()
    }
}

impl std::ops::Index<usize> for ArmSet {
    type Output = ArmFeature;

    fn index(&self, index: usize) -> &ArmFeature {
        &self.arms[index]
    }
}

impl<'a> IntoIterator for &'a ArmSet {
    type Item = &'a ArmFeature;
    type IntoIter = std::slice::Iter<'a, ArmFeature>;

    fn into_iter(self) -> Self::IntoIter {
        self.arms.iter()
    }
}

/// Running sufficient statistics of a bandit run.
///
/// `gram = λI + Σ x xᵀ` and `moment = Σ r x` over the transcript. The raw
/// transcript is kept too, because the logistic and neural losses are not
/// functions of `(gram, moment)` alone.
#[derive(Debug, Clone)]
pub struct History {
    lambda: f64,
    gram: DMatrix<f64>,
    moment: DVector<f64>,
    transcript: Vec<(ArmFeature, f64)>,
}

impl History {
    pub fn new(lambda: f64, dim: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid("history dimension must be >= 1"));
        }
        Ok(Self {
            lambda,
            gram: DMatrix::identity(dim, dim) * lambda,
            moment: DVector::zeros(dim),
            transcript: Vec::new(),
        })
    }

    /// Batch reconstruction from a transcript.
    pub fn rebuild(lambda: f64, dim: usize, transcript: &[(ArmFeature, f64)]) -> Result<Self> {
        let mut gram = DMatrix::identity(dim, dim) * lambda;
        let mut moment = DVector::zeros(dim);
        for (x, r) in transcript {
            check_dim(dim, x.dim())?;
            gram += x.vector() * x.vector().transpose();
            moment += x.vector() * *r;
        }
        let mut h = Self::new(lambda, dim)?;
        h.gram = gram;
        h.moment = moment;
        h.transcript = transcript.to_vec();
        Ok(h)
    }

    /// Records one observation in place.
    pub fn observe(&mut self, x: &ArmFeature, reward: f64) -> Result<()> {
        check_dim(self.dim(), x.dim())?;
        if !reward.is_finite() {
            return Err(Error::invalid("reward must be finite"));
        }
        self.gram.ger(1.0, x.vector(), x.vector(), 1.0);
        self.moment.axpy(reward, x.vector(), 1.0);
        self.transcript.push((x.clone(), reward));
        Ok(())
    }

    /// Value-returning form of [`History::observe`].
    pub fn updated(&self, x: &ArmFeature, reward: f64) -> Result<Self> {
        let mut next = self.clone();
        next.observe(x, reward)?;
        Ok(next)
    }

    pub fn dim(&self) -> usize {
        self.moment.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn moment(&self) -> &DVector<f64> {
        &self.moment
    }

    pub fn transcript(&self) -> &[(ArmFeature, f64)] {
        &self.transcript
    }

    /// Number of observations so far (t − 1 at round t).
    pub fn round(&self) -> usize {
        self.transcript.len()
    }

    pub fn factorize(&self) -> Result<Cholesky<f64, Dyn>> {
        linalg::cholesky(&self.gram)
    }

    /// Ridge estimate `V⁻¹ b` through a Cholesky solve.
    pub fn ridge_solution(&self) -> Result<DVector<f64>> {
        let factor = self.factorize()?;
        self.ridge_solution_with(&factor)
    }

    /// Ridge estimate from an existing factorization of the current gram.
    /// The relative residual is checked and refined once if needed.
    pub fn ridge_solution_with(&self, factor: &Cholesky<f64, Dyn>) -> Result<DVector<f64>> {
        let b = &self.moment;
        let b_norm = b.norm();
        if b_norm == 0.0 {
            return Ok(DVector::zeros(self.dim()));
        }
        let mut theta = factor.solve(b);
        let tol = 1e-8 * b_norm;
        let mut residual = &self.gram * &theta - b;
        if residual.norm() > tol {
            theta -= factor.solve(&residual);
            residual = &self.gram * &theta - b;
        }
        if !(residual.norm() <= tol) {
            return Err(Error::Numerical {
                message: format!(
                    "ridge solve residual {:.3e} exceeds {:.3e}",
                    residual.norm(),
                    tol
                ),
                condition: linalg::condition_estimate(&self.gram),
            });
        }
        Ok(theta)
    }

    /// `sqrt(xᵀ V⁻¹ x)` through a solve; no inverse is formed.
    pub fn mahalanobis_inv_norm(&self, x: &ArmFeature) -> Result<f64> {
        check_dim(self.dim(), x.dim())?;
        let factor = self.factorize()?;
        Ok(mahalanobis_with(&factor, x))
    }
}

/// `sqrt(xᵀ V⁻¹ x) = ‖L⁻¹ x‖` for `V = L Lᵀ`.
pub fn mahalanobis_with(factor: &Cholesky<f64, Dyn>, x: &DVector<f64>) -> f64 {
    let y = factor
        .l_dirty()
        .solve_lower_triangular(x)
        .expect("cholesky factor has a positive diagonal");
    y.norm()
}

/// A gram factorization reused for as long as the history it was computed
/// from is unchanged. Disabled caches factorize on every call.
#[derive(Debug, Clone)]
pub struct FactorCache {
    enabled: bool,
    entry: Option<(usize, Cholesky<f64, Dyn>)>,
}

impl FactorCache {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            entry: None,
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn get(&mut self, history: &History) -> Result<&Cholesky<f64, Dyn>> {
        let fresh = match &self.entry {
            Some((round, _)) => !self.enabled || *round != history.round(),
            None => true,
        };
        if fresh {
            self.entry = Some((history.round(), history.factorize()?));
        }
        Ok(&self.entry.as_ref().expect("entry populated above").1)
    }

    /// Drops the cached factor; called whenever the history changes.
    pub fn invalidate(&mut self) {
        self.entry = None;
    }
}

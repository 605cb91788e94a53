//! Reward models `f(x, θ)` together with their regularized losses over a
//! [`History`], analytic gradients, Hessians and a deterministic minimizer.
//!
//! Three families are supported:
//!
//! * linear, `f = xᵀθ`, loss `Σ (xᵢᵀθ − rᵢ)² + λ‖θ‖²`;
//! * generalized linear with link `μ`, loss `Σ (m(xᵢᵀθ) − rᵢ xᵢᵀθ) + λ‖θ‖²`
//!   where `m' = μ`;
//! * a fully-connected network with leaky-ReLU hidden layers, squared loss.
//!
//! Parameters are always a flat vector so the Langevin sampler can perturb
//! every coordinate with isotropic noise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::History;
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Logistic,
}

impl Link {
    /// μ(z)
    pub fn mean(self, z: f64) -> f64 {
        match self {
            Link::Identity => z,
            Link::Logistic => sigmoid(z),
        }
    }

    /// μ'(z)
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Logistic => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
        }
    }

    /// Cumulant `m` with `m' = μ`.
    pub fn cumulant(self, z: f64) -> f64 {
        match self {
            Link::Identity => 0.5 * z * z,
            Link::Logistic => softplus(z),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmModel {
    pub dim: usize,
    pub link: Link,
}

/// Fully-connected network `[d, w₁, …, w_L, 1]`.
///
/// Flat parameter layout, layer by layer: the `out × in` weight matrix in
/// row-major order, then the `out` biases. Hidden layers use leaky-ReLU with
/// slope `slope` (0 gives ReLU, 1 makes the network linear); the output
/// layer is affine.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    widths: Vec<usize>,
    slope: f64,
}

/// Per-layer weights and biases in their natural shapes.
pub type Layers = Vec<(DMatrix<f64>, DVector<f64>)>;

impl MlpModel {
    pub fn new(input_dim: usize, hidden: &[usize], slope: f64) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::invalid("network widths must be >= 1"));
        }
        if !(0.0..=1.0).contains(&slope) {
            return Err(Error::invalid(format!(
                "leaky-ReLU slope must be in [0, 1], got {slope}"
            )));
        }
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input_dim);
        widths.extend_from_slice(hidden);
        widths.push(1);
        Ok(Self { widths, slope })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    fn max_width(&self) -> usize {
        *self.widths.iter().max().expect("widths non-empty")
    }

    /// He-style initialization: weights `N(0, 2/fan_in)`, zero biases.
    pub fn init_params(&self, rng: &mut RngStream) -> DVector<f64> {
        let mut theta = DVector::zeros(self.param_count());
        let mut offset = 0;
        for w in self.widths.windows(2) {
            let (fan_in, out) = (w[0], w[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            for k in 0..fan_in * out {
                theta[offset + k] = scale * rng.standard_normal();
            }
            offset += fan_in * out + out;
        }
        theta
    }

    pub fn unflatten(&self, theta: &DVector<f64>) -> Result<Layers> {
        check_dim(self.param_count(), theta.len())?;
        let mut layers = Vec::with_capacity(self.widths.len() - 1);
        let mut offset = 0;
        for w in self.widths.windows(2) {
            let (fan_in, out) = (w[0], w[1]);
            let weights = DMatrix::from_row_slice(
                out,
                fan_in,
                &theta.as_slice()[offset..offset + out * fan_in],
            );
            offset += out * fan_in;
            let bias = DVector::from_column_slice(&theta.as_slice()[offset..offset + out]);
            offset += out;
            layers.push((weights, bias));
        }
        Ok(layers)
    }

    pub fn flatten(&self, layers: &Layers) -> Result<DVector<f64>> {
        if layers.len() != self.widths.len() - 1 {
            return Err(Error::invalid("layer count does not match architecture"));
        }
        let mut theta = Vec::with_capacity(self.param_count());
        for ((weights, bias), w) in layers.iter().zip(self.widths.windows(2)) {
            if weights.shape() != (w[1], w[0]) || bias.len() != w[1] {
                return Err(Error::invalid("layer shape does not match architecture"));
            }
            for r in 0..weights.nrows() {
                theta.extend(weights.row(r).iter());
            }
            theta.extend(bias.iter());
        }
        Ok(DVector::from_vec(theta))
    }

    fn activate(&self, z: f64) -> f64 {
        if z > 0.0 {
            z
        } else {
            self.slope * z
        }
    }

    fn activate_derivative(&self, z: f64) -> f64 {
        if z > 0.0 {
            1.0
        } else {
            self.slope
        }
    }

    /// Forward pass storing pre-activations of every layer in `ws`.
    fn forward_cached(&self, x: &[f64], theta: &[f64], ws: &mut Workspace) -> f64 {
        let layers = self.widths.len() - 1;
        ws.reset(self);
        ws.inputs[0][..x.len()].copy_from_slice(x);
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, out) = (self.widths[l], self.widths[l + 1]);
            let weights = &theta[offset..offset + out * fan_in];
            let bias = &theta[offset + out * fan_in..offset + out * fan_in + out];
            offset += out * fan_in + out;
            let (inputs, rest) = ws.inputs.split_at_mut(l + 1);
            let input = &inputs[l][..fan_in];
            for j in 0..out {
                let row = &weights[j * fan_in..(j + 1) * fan_in];
                let z = bias[j] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
                ws.pre[l][j] = z;
                if l + 1 < layers {
                    rest[0][j] = self.activate(z);
                }
            }
        }
        ws.pre[layers - 1][0]
    }

    fn forward(&self, x: &[f64], theta: &[f64]) -> f64 {
        let mut ws = Workspace::default();
        self.forward_cached(x, theta, &mut ws)
    }

    /// Adds `scale · ∂f(x, θ)/∂θ` into `grad`, where `x` is the input of the
    /// most recent [`MlpModel::forward_cached`] call on `ws`.
    fn backward(&self, theta: &[f64], scale: f64, grad: &mut [f64], ws: &mut Workspace) {
        let layers = self.widths.len() - 1;
        // Offsets of each layer's block in the flat vector.
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for w in self.widths.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        ws.delta[0] = scale;
        for l in (0..layers).rev() {
            let (fan_in, out) = (self.widths[l], self.widths[l + 1]);
            let base = offsets[l];
            let input = &ws.inputs[l][..fan_in];
            for j in 0..out {
                let d = ws.delta[j];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[base + j * fan_in..base + (j + 1) * fan_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
                grad[base + out * fan_in + j] += d;
            }
            if l > 0 {
                let weights = &theta[base..base + out * fan_in];
                for i in 0..fan_in {
                    let mut back = 0.0;
                    for j in 0..out {
                        back += weights[j * fan_in + i] * ws.delta[j];
                    }
                    ws.next_delta[i] = back * self.activate_derivative(ws.pre[l - 1][i]);
                }
                std::mem::swap(&mut ws.delta, &mut ws.next_delta);
            }
        }
    }
}

#[derive(Debug, Default)]
struct Workspace {
    /// `inputs[l]` is the input to layer `l` (the activations of layer l−1).
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next_delta: Vec<f64>,
}

impl Workspace {
    fn reset(&mut self, mlp: &MlpModel) {
        let layers = mlp.widths.len() - 1;
        if self.inputs.len() != layers {
            self.inputs = mlp.widths[..layers].iter().map(|&w| vec![0.0; w]).collect();
            self.pre = mlp.widths[1..].iter().map(|&w| vec![0.0; w]).collect();
            let m = mlp.max_width();
            self.delta = vec![0.0; m];
            self.next_delta = vec![0.0; m];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RewardModel {
    Linear(LinearModel),
    Glm(GlmModel),
    Mlp(MlpModel),
}

impl RewardModel {
    pub fn linear(dim: usize) -> Self {
        RewardModel::Linear(LinearModel { dim })
    }

    pub fn glm(dim: usize, link: Link) -> Self {
        RewardModel::Glm(GlmModel { dim, link })
    }

    pub fn mlp(input_dim: usize, hidden: &[usize], slope: f64) -> Result<Self> {
        MlpModel::new(input_dim, hidden, slope).map(RewardModel::Mlp)
    }

    pub fn input_dim(&self) -> usize {
        match self {
            RewardModel::Linear(m) => m.dim,
            RewardModel::Glm(m) => m.dim,
            RewardModel::Mlp(m) => m.input_dim(),
        }
    }

    pub fn param_dim(&self) -> usize {
        match self {
            RewardModel::Linear(m) => m.dim,
            RewardModel::Glm(m) => m.dim,
            RewardModel::Mlp(m) => m.param_count(),
        }
    }

    /// Initial parameter vector: zero for linear and GLM models, random for
    /// networks (a zero network has vanishing hidden gradients).
    pub fn initial_params(&self, rng: &mut RngStream) -> DVector<f64> {
        match self {
            RewardModel::Mlp(m) => m.init_params(rng),
            _ => DVector::zeros(self.param_dim()),
        }
    }

    pub fn predict(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
        check_dim(self.input_dim(), x.len())?;
        check_dim(self.param_dim(), theta.len())?;
        Ok(self.predict_unchecked(x, theta))
    }

    pub(crate) fn predict_unchecked(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        match self {
            RewardModel::Linear(_) => x.dot(theta),
            RewardModel::Glm(m) => m.link.mean(x.dot(theta)),
            RewardModel::Mlp(m) => m.forward(x.as_slice(), theta.as_slice()),
        }
    }

    /// Predictions for a batch of inputs, sharing one workspace.
    pub fn predict_many<'a, I>(&self, xs: I, theta: &DVector<f64>) -> Result<Vec<f64>>
    where
        I: IntoIterator<Item = &'a DVector<f64>>,
    {
        check_dim(self.param_dim(), theta.len())?;
        let mut ws = Workspace::default();
        xs.into_iter()
            .map(|x| {
                check_dim(self.input_dim(), x.len())?;
                Ok(match self {
                    RewardModel::Mlp(m) => {
                        m.forward_cached(x.as_slice(), theta.as_slice(), &mut ws)
                    }
                    _ => self.predict_unchecked(x, theta),
                })
            })
            .collect()
    }
}

/// A regularized loss `L(θ)` of a model over a history.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec<'a> {
    pub model: &'a RewardModel,
    pub lambda: f64,
    pub history: &'a History,
}

/// Result of [`LossSpec::minimize`].
#[derive(Debug, Clone)]
pub struct Minimized {
    pub theta: DVector<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Whether the gradient or Newton-decrement test was met; otherwise the
    /// iteration cap was hit or no representable decrease remained.
    pub converged: bool,
}

impl<'a> LossSpec<'a> {
    pub fn new(model: &'a RewardModel, lambda: f64, history: &'a History) -> Result<Self> {
        check_dim(model.input_dim(), history.dim())?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "regularization must be >= 0, got {lambda}"
            )));
        }
        Ok(Self {
            model,
            lambda,
            history,
        })
    }

    pub fn param_dim(&self) -> usize {
        self.model.param_dim()
    }

    pub fn loss(&self, theta: &DVector<f64>) -> Result<f64> {
        check_dim(self.param_dim(), theta.len())?;
        let reg = self.lambda * theta.norm_squared();
        let data: f64 = match self.model {
            RewardModel::Linear(_) => self
                .history
                .transcript()
                .iter()
                .map(|(x, r)| (x.dot(theta) - r).powi(2))
                .sum(),
            RewardModel::Glm(m) => self
                .history
                .transcript()
                .iter()
                .map(|(x, r)| {
                    let z = x.dot(theta);
                    m.link.cumulant(z) - r * z
                })
                .sum(),
            RewardModel::Mlp(m) => {
                let mut ws = Workspace::default();
                self.history
                    .transcript()
                    .iter()
                    .map(|(x, r)| {
                        (m.forward_cached(x.as_slice(), theta.as_slice(), &mut ws) - r).powi(2)
                    })
                    .sum()
            }
        };
        Ok(data + reg)
    }

    /// Full gradient. For the linear model this is exactly `2(Vθ − b)` when
    /// the loss and the history share λ.
    pub fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.param_dim(), theta.len())?;
        if let RewardModel::Linear(_) = self.model {
            let mut g = self.history.gram() * theta - self.history.moment();
            let shift = self.lambda - self.history.lambda();
            if shift != 0.0 {
                g.axpy(shift, theta, 1.0);
            }
            return Ok(g * 2.0);
        }
        let n = self.history.round();
        self.data_gradient(theta, 0..n, 1.0)
    }

    /// Unbiased mini-batch gradient: the data term over `batch` rescaled by
    /// `n / |batch|`, plus the full regularizer gradient.
    pub fn gradient_subset(&self, theta: &DVector<f64>, batch: &[usize]) -> Result<DVector<f64>> {
        check_dim(self.param_dim(), theta.len())?;
        let n = self.history.round();
        if batch.is_empty() || batch.len() >= n {
            return self.gradient(theta);
        }
        if let Some(&bad) = batch.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!(
                "batch index {bad} out of range for {n} observations"
            )));
        }
        let scale = n as f64 / batch.len() as f64;
        self.data_gradient(theta, batch.iter().copied(), scale)
    }

    fn data_gradient<I>(&self, theta: &DVector<f64>, indices: I, scale: f64) -> Result<DVector<f64>>
    where
        I: IntoIterator<Item = usize>,
    {
        let transcript = self.history.transcript();
        let mut g = theta * (2.0 * self.lambda);
        match self.model {
            RewardModel::Linear(_) => {
                for i in indices {
                    let (x, r) = &transcript[i];
                    g.axpy(2.0 * scale * (x.dot(theta) - r), x.vector(), 1.0);
                }
            }
            RewardModel::Glm(m) => {
                for i in indices {
                    let (x, r) = &transcript[i];
                    g.axpy(scale * (m.link.mean(x.dot(theta)) - r), x.vector(), 1.0);
                }
            }
            RewardModel::Mlp(m) => {
                let mut ws = Workspace::default();
                let grad = g.as_mut_slice();
                for i in indices {
                    let (x, r) = &transcript[i];
                    let value = m.forward_cached(x.as_slice(), theta.as_slice(), &mut ws);
                    m.backward(theta.as_slice(), 2.0 * scale * (value - r), grad, &mut ws);
                }
            }
        }
        Ok(g)
    }

    pub fn hessian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.param_dim(), theta.len())?;
        let d = self.param_dim();
        match self.model {
            RewardModel::Linear(_) => {
                let shift = self.lambda - self.history.lambda();
                let mut h = self.history.gram() * 2.0;
                if shift != 0.0 {
                    for i in 0..d {
                        h[(i, i)] += 2.0 * shift;
                    }
                }
                Ok(h)
            }
            RewardModel::Glm(m) => {
                let mut h = DMatrix::identity(d, d) * (2.0 * self.lambda);
                for (x, _) in self.history.transcript() {
                    let w = m.link.derivative(x.dot(theta));
                    h.ger(w, x.vector(), x.vector(), 1.0);
                }
                Ok(h)
            }
            RewardModel::Mlp(_) => Err(Error::Unsupported("Hessian of a network loss".into())),
        }
    }

    /// Newton's method with Armijo backtracking from `start`.
    ///
    /// Each iteration moves along `−H⁻¹∇L`, trying the full step first and
    /// halving until the sufficient-decrease test holds. Converges once
    /// `‖∇L‖ ≤ tol` or once the Newton decrement `∇Lᵀ H⁻¹ ∇L` falls below the
    /// loss's rounding error; gives up after `max_iters` accepted steps.
    pub fn minimize(&self, start: &DVector<f64>, max_iters: usize, tol: f64) -> Result<Minimized> {
        if let RewardModel::Mlp(_) = self.model {
            return Err(Error::Unsupported(
                "minimize is defined for linear and GLM losses".into(),
            ));
        }
        const ARMIJO: f64 = 1e-4;
        const MAX_BACKTRACKS: usize = 60;
        const DECREMENT_FLOOR: f64 = 1024.0 * f64::EPSILON;
        let slack = 16.0 * f64::EPSILON;
        let mut theta = start.clone();
        let mut value = self.loss(&theta)?;
        if !value.is_finite() {
            return Err(Error::OptimizationFailure(format!(
                "loss is not finite at start ({value})"
            )));
        }
        let mut gradient = self.gradient(&theta)?;
        let mut iterations = 0;
        while iterations < max_iters {
            let gnorm2 = gradient.norm_squared();
            if !gnorm2.is_finite() {
                return Err(Error::OptimizationFailure("gradient is not finite".into()));
            }
            if gnorm2.sqrt() <= tol {
                break;
            }
            // The regularized losses here are strictly convex, so the
            // factorization only fails on a singular unregularized Hessian.
            let direction = match linalg::cholesky(&self.hessian(&theta)?) {
                Ok(factor) => -factor.solve(&gradient),
                Err(_) => -&gradient / self.lipschitz_guess(),
            };
            let slope = gradient.dot(&direction);
            // The predicted decrease is below the rounding error of a loss
            // summed over the history.
            if -slope <= DECREMENT_FLOOR * value.abs().max(1.0) {
                return Ok(Minimized {
                    gradient_norm: gnorm2.sqrt(),
                    theta,
                    iterations,
                    converged: true,
                });
            }
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                let candidate = &theta + &direction * step;
                let cv = self.loss(&candidate)?;
                if cv < value && cv <= value + ARMIJO * step * slope {
                    accepted = Some((candidate, cv, None));
                    break;
                }
                // Below the loss's rounding error the decrease test is
                // meaningless; fall back to requiring a smaller gradient.
                if cv.is_finite() && (cv - value).abs() <= slack * value.abs().max(1.0) {
                    let g = self.gradient(&candidate)?;
                    if g.norm_squared() < gnorm2 {
                        accepted = Some((candidate, cv, Some(g)));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((candidate, cv, g)) = accepted else {
                // No representable decrease left; report where we are.
                break;
            };
            theta = candidate;
            value = cv;
            gradient = match g {
                Some(g) => g,
                None => self.gradient(&theta)?,
            };
            iterations += 1;
        }
        let gradient_norm = gradient.norm();
        Ok(Minimized {
            theta,
            iterations,
            gradient_norm,
            converged: gradient_norm <= tol,
        })
    }

    /// Cheap upper bound on the gradient's Lipschitz constant.
    fn lipschitz_guess(&self) -> f64 {
        let curvature = match self.model {
            RewardModel::Glm(GlmModel {
                link: Link::Logistic,
                ..
            }) => 0.25,
            RewardModel::Linear(_) => 2.0,
            _ => 1.0,
        };
        let data: f64 = self
            .history
            .transcript()
            .iter()
            .map(|(x, _)| x.norm_squared())
            .sum();
        curvature * data + 2.0 * self.lambda.max(1e-12)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ArmFeature;
    use approx::assert_relative_eq;

    fn arm(v: &[f64]) -> ArmFeature {
        ArmFeature::from_slice(v).unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn predict_examples() {
        let lin = RewardModel::linear(3);
        assert_eq!(
            lin.predict(&v(&[1.0, 0.0, 0.0]), &v(&[2.0, 5.0, 7.0]))
                .unwrap(),
            2.0
        );
        let glm = RewardModel::glm(2, Link::Logistic);
        assert_eq!(glm.predict(&v(&[1.0, -1.0]), &v(&[3.0, 3.0])).unwrap(), 0.5);
        assert!(lin.predict(&v(&[1.0]), &v(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn single_layer_network_is_linear() {
        let mlp = RewardModel::mlp(3, &[], 1.0).unwrap();
        let mut theta = v(&[0.5, -1.0, 2.0, 0.0]);
        let x = v(&[0.3, 0.2, -0.7]);
        let lin = RewardModel::linear(3);
        assert_relative_eq!(
            mlp.predict(&x, &theta).unwrap(),
            lin.predict(&x, &v(&[0.5, -1.0, 2.0])).unwrap(),
            epsilon = 1e-15
        );
        theta[3] = 1.5;
        assert_relative_eq!(
            mlp.predict(&x, &theta).unwrap(),
            lin.predict(&x, &v(&[0.5, -1.0, 2.0])).unwrap() + 1.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn flatten_round_trip() {
        let RewardModel::Mlp(mlp) = RewardModel::mlp(4, &[5, 3], 0.1).unwrap() else {
            unreachable!()
        };
        let mut rng = RngStream::new(1, 1);
        let theta = rng.normal_vector(mlp.param_count());
        let layers = mlp.unflatten(&theta).unwrap();
        assert_eq!(layers[0].0.shape(), (5, 4));
        assert_eq!(layers[2].0.shape(), (1, 3));
        assert_eq!(mlp.flatten(&layers).unwrap(), theta);
        // Layout: first row of the first weight matrix comes first.
        assert_eq!(layers[0].0[(0, 1)], theta[1]);
        assert_eq!(layers[0].1[0], theta[20]);
    }

    #[test]
    fn loss_examples() {
        let lin = RewardModel::linear(2);
        let empty = History::new(1.0, 2).unwrap();
        let spec = LossSpec::new(&lin, 1.0, &empty).unwrap();
        assert_eq!(spec.loss(&v(&[3.0, 4.0])).unwrap(), 25.0);

        let one = empty.updated(&arm(&[1.0, 0.0]), 2.0).unwrap();
        let spec = LossSpec::new(&lin, 0.0, &one).unwrap();
        assert_eq!(spec.loss(&v(&[0.0, 0.0])).unwrap(), 4.0);

        let glm = RewardModel::glm(1, Link::Logistic);
        let h = History::new(1.0, 1)
            .unwrap()
            .updated(&arm(&[1.0]), 1.0)
            .unwrap();
        let spec = LossSpec::new(&glm, 0.0, &h).unwrap();
        assert_relative_eq!(
            spec.loss(&v(&[0.0])).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn softplus_is_overflow_safe() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert_relative_eq!(softplus(0.0), std::f64::consts::LN_2);
        assert!(sigmoid(-1000.0) >= 0.0 && sigmoid(1000.0) <= 1.0);
    }

    #[test]
    fn linear_gradient_examples() {
        let lin = RewardModel::linear(2);
        let fresh = History::new(1.0, 2).unwrap();
        let spec = LossSpec::new(&lin, 1.0, &fresh).unwrap();
        assert_eq!(spec.gradient(&v(&[1.0, 1.0])).unwrap(), v(&[2.0, 2.0]));

        let mut h = History::new(1.0, 2).unwrap();
        h.observe(&arm(&[1.0, 0.0]), 2.0).unwrap();
        h.observe(&arm(&[0.0, 1.0]), 3.0).unwrap();
        let spec = LossSpec::new(&lin, 1.0, &h).unwrap();
        assert_eq!(spec.gradient(&v(&[1.0, 1.5])).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(spec.hessian(&v(&[0.0, 0.0])).unwrap(), h.gram() * 2.0);
    }

    #[test]
    fn glm_hessian_at_zero() {
        let glm = RewardModel::glm(2, Link::Logistic);
        let h = History::new(1.0, 2)
            .unwrap()
            .updated(&arm(&[1.0, 0.0]), 1.0)
            .unwrap();
        let spec = LossSpec::new(&glm, 0.0, &h).unwrap();
        let hess = spec.hessian(&v(&[0.0, 0.0])).unwrap();
        assert_eq!(hess, DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn mlp_hessian_unsupported() {
        let mlp = RewardModel::mlp(2, &[3], 0.0).unwrap();
        let h = History::new(1.0, 2).unwrap();
        let spec = LossSpec::new(&mlp, 1.0, &h).unwrap();
        let theta = DVector::zeros(mlp.param_dim());
        assert!(matches!(spec.hessian(&theta), Err(Error::Unsupported(_))));
        assert!(matches!(
            spec.minimize(&theta, 10, 1e-6),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn minimize_examples() {
        let glm = RewardModel::glm(3, Link::Logistic);
        let h = History::new(1.0, 3).unwrap();
        let spec = LossSpec::new(&glm, 1.0, &h).unwrap();
        let out = spec.minimize(&v(&[0.0, 0.0, 0.0]), 100, 1e-8).unwrap();
        assert_eq!(out.theta, DVector::zeros(3));
        assert!(out.converged);

        let glm = RewardModel::glm(1, Link::Logistic);
        let mut h = History::new(1.0, 1).unwrap();
        for _ in 0..5 {
            h.observe(&arm(&[1.0]), 1.0).unwrap();
            h.observe(&arm(&[-1.0]), 0.0).unwrap();
        }
        let spec = LossSpec::new(&glm, 0.1, &h).unwrap();
        let out = spec.minimize(&v(&[0.0]), 500, 1e-8).unwrap();
        assert!(out.converged, "{out:?}");
        assert!(out.theta[0] > 0.0);
        // Stationarity checked against an independent central difference.
        let e = 1e-6;
        let fd = (spec.loss(&v(&[out.theta[0] + e])).unwrap()
            - spec.loss(&v(&[out.theta[0] - e])).unwrap())
            / (2.0 * e);
        assert!(fd.abs() < 1e-6, "fd {fd}");
    }

    #[test]
    fn minimize_linear_matches_ridge() {
        let mut rng = RngStream::new(3, 0);
        let lin = RewardModel::linear(4);
        let mut h = History::new(1.0, 4).unwrap();
        for _ in 0..30 {
            let x = rng.normal_vector(4);
            let r = x[0] - 0.5 * x[2] + 0.1 * rng.standard_normal();
            h.observe(&ArmFeature::new(x).unwrap(), r).unwrap();
        }
        let spec = LossSpec::new(&lin, 1.0, &h).unwrap();
        let out = spec.minimize(&DVector::zeros(4), 10, 1e-9).unwrap();
        assert!(out.converged && out.iterations <= 2, "{out:?}");
        assert_relative_eq!(out.theta, h.ridge_solution().unwrap(), epsilon = 1e-6);
    }
}

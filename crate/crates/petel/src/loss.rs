//! Loss models: per-observation loss and moment (gradient or subgradient)
//! pairs.
//!
//! A [`LossModel`] ties together a loss `l(x, theta)` and a moment
//! function `g(x, theta)` with `E[g(X, theta)] = grad R(theta)`, the
//! gradient of the population risk. For smooth losses `g` is the plain
//! gradient; at kinks it is a fixed measurable subgradient selection:
//!
//! * hinge: the active branch at the margin boundary (`1{u <= 1}`
//!   includes equality),
//! * check loss: `1{y < x.theta}` stays a strict inequality at ties,
//! * Huber: the quadratic branch at `|r| = delta`.
//!
//! Risks and moment means accumulate with compensated summation; the
//! tilting solver downstream is sensitive to the residual of the sample
//! mean of `g`.

use crate::data::Dataset;
use crate::math::KahanSum;
use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("model {model}: parameter has length {got}, expected {expected}")]
    DimensionMismatch { model: &'static str, expected: usize, got: usize },
    #[error("model {model}: non-finite loss at observation {index} (invalid theta for this model)")]
    NonFiniteLoss { model: &'static str, index: usize },
    #[error("model {model} requires a response column")]
    MissingResponse { model: &'static str },
    #[error("model {model} requires a ±1 label column")]
    MissingLabels { model: &'static str },
    #[error("model {model} requires {expected} feature columns, dataset has {got}")]
    FeatureCount { model: &'static str, expected: usize, got: usize },
}

/// A per-observation loss with a matching moment function.
///
/// Observations are addressed by row index into the dataset; all methods
/// are pure, so models and datasets can be shared freely across threads.
pub trait LossModel: Send + Sync {
    /// Parameter dimension for this model over the given dataset.
    fn dim(&self, data: &Dataset) -> usize;

    fn name(&self) -> &'static str;

    /// Checks that the dataset carries the columns this model needs.
    fn validate(&self, data: &Dataset) -> Result<(), LossError>;

    /// Loss of observation `i` at `theta`.
    fn loss(&self, data: &Dataset, i: usize, theta: &[f64]) -> f64;

    /// Moment vector of observation `i` at `theta`, written into `out`.
    fn moment_into(&self, data: &Dataset, i: usize, theta: &[f64], out: &mut [f64]);

    /// Hessian of the per-observation loss at `theta`, added into `out`.
    /// Non-smooth losses use their `eps`-smoothed surrogate; models
    /// without a Hessian surrogate return `false` and leave `out` alone.
    fn add_hessian(
        &self,
        _data: &Dataset,
        _i: usize,
        _theta: &[f64],
        _eps: f64,
        _out: &mut Array2<f64>,
    ) -> bool {
        false
    }
}

fn check_dim(model: &dyn LossModel, data: &Dataset, theta: &[f64]) -> Result<(), LossError> {
    model.validate(data)?;
    let d = model.dim(data);
    if theta.len() != d {
        return Err(LossError::DimensionMismatch {
            model: model.name(),
            expected: d,
            got: theta.len(),
        });
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(LossError::NonFiniteLoss { model: model.name(), index: usize::MAX });
    }
    Ok(())
}

/// Empirical risk `R_n(theta) = n^{-1} sum_i l(X_i, theta)` with
/// compensated summation.
pub fn empirical_risk(
    model: &dyn LossModel,
    data: &Dataset,
    theta: &[f64],
) -> Result<f64, LossError> {
    check_dim(model, data, theta)?;
    let mut acc = KahanSum::new();
    for i in 0..data.n() {
        let l = model.loss(data, i, theta);
        if !l.is_finite() {
            return Err(LossError::NonFiniteLoss { model: model.name(), index: i });
        }
        acc.add(l);
    }
    Ok(acc.value() / data.n() as f64)
}

/// The n x d matrix whose row i is `g(X_i, theta)`.
pub fn moment_matrix(
    model: &dyn LossModel,
    data: &Dataset,
    theta: &[f64],
) -> Result<Array2<f64>, LossError> {
    check_dim(model, data, theta)?;
    let d = model.dim(data);
    let mut g = Array2::<f64>::zeros((data.n(), d));
    for i in 0..data.n() {
        let mut row = g.row_mut(i);
        model.moment_into(data, i, theta, row.as_slice_mut().expect("row-major"));
    }
    Ok(g)
}

/// Mean Hessian `n^{-1} sum_i Hess l_eps(X_i, theta)`, or `None` when the
/// model has no Hessian surrogate.
pub fn mean_hessian(
    model: &dyn LossModel,
    data: &Dataset,
    theta: &[f64],
    eps: f64,
) -> Option<Array2<f64>> {
    let d = model.dim(data);
    let mut h = Array2::<f64>::zeros((d, d));
    for i in 0..data.n() {
        if !model.add_hessian(data, i, theta, eps, &mut h) {
            return None;
        }
    }
    Some(h / data.n() as f64)
}

#[inline]
fn dot(a: &[f64], b: ndarray::ArrayView1<'_, f64>) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        s += x * y;
    }
    s
}

/// Numerically stable logistic sigmoid.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// ---------------------------------------------------------------------
// Squared loss
// ---------------------------------------------------------------------

/// Linear least squares: `l = (y - x.theta)^2 / 2`, `g = (x.theta - y) x`.
///
/// With a single all-ones feature column this is the scalar location
/// model, the conjugate sanity case for the normal-approximation tests.
#[derive(Debug, Clone, Copy)]
pub struct SquaredLoss;

/// Squared-loss constructor.
pub fn squared_loss() -> SquaredLoss {
    SquaredLoss
}

impl LossModel for SquaredLoss {
    fn dim(&self, data: &Dataset) -> usize {
        data.p()
    }

    fn name(&self) -> &'static str {
        "squared_loss"
    }

    fn validate(&self, data: &Dataset) -> Result<(), LossError> {
        if data.response().is_none() {
            return Err(LossError::MissingResponse { model: self.name() });
        }
        Ok(())
    }

    fn loss(&self, data: &Dataset, i: usize, theta: &[f64]) -> f64 {
        let r = data.response().expect("validated")[i] - dot(theta, data.feature_row(i));
        0.5 * r * r
    }

    fn moment_into(&self, data: &Dataset, i: usize, theta: &[f64], out: &mut [f64]) {
        let x = data.feature_row(i);
        let r = dot(theta, x) - data.response().expect("validated")[i];
        for (o, &xj) in out.iter_mut().zip(x.iter()) {
            *o = r * xj;
        }
    }

    fn add_hessian(
        &self,
        data: &Dataset,
        i: usize,
        _theta: &[f64],
        _eps: f64,
        out: &mut Array2<f64>,
    ) -> bool {
        let x = data.feature_row(i);
        for a in 0..x.len() {
            for b in 0..x.len() {
                out[[a, b]] += x[a] * x[b];
            }
        }
        true
    }
}

// ---------------------------------------------------------------------
// Check loss (quantile regression)
// ---------------------------------------------------------------------

/// Quantile-regression check loss
/// `l = (y - x.theta)(tau - 1{y < x.theta})` with subgradient
/// `g = (1{y < x.theta} - tau) x`.
#[derive(Debug, Clone, Copy)]
pub struct CheckLoss {
    tau: f64,
}

/// Check-loss constructor; `tau` must lie strictly inside (0, 1).
pub fn check_loss(tau: f64) -> CheckLoss {
    assert!(tau > 0.0 && tau < 1.0, "check_loss: tau must be in (0,1)");
    CheckLoss { tau }
}

impl CheckLoss {
    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl LossModel for CheckLoss {
    fn dim(&self, data: &Dataset) -> usize {
        data.p()
    }

    fn name(&self) -> &'static str {
        "check_loss"
    }

    fn validate(&self, data: &Dataset) -> Result<(), LossError> {
        if data.response().is_none() {
            return Err(LossError::MissingResponse { model: self.name() });
        }
        Ok(())
    }

    fn loss(&self, data: &Dataset, i: usize, theta: &[f64]) -> f64 {
        let y = data.response().expect("validated")[i];
        let fit = dot(theta, data.feature_row(i));
        let ind = if y < fit { 1.0 } else { 0.0 };
        (y - fit) * (self.tau - ind)
    }

    fn moment_into(&self, data: &Dataset, i: usize, theta: &[f64], out: &mut [f64]) {
        let x = data.feature_row(i);
        let y = data.response().expect("validated")[i];
        let ind = if y < dot(theta, x) { 1.0 } else { 0.0 };
        let w = ind - self.tau;
        for (o, &xj) in out.iter_mut().zip(x.iter()) {
            *o = w * xj;
        }
    }

    fn add_hessian(
        &self,
        data: &Dataset,
        i: usize,
        theta: &[f64],
        eps: f64,
        out: &mut Array2<f64>,
    ) -> bool {
        // Hessian of the smoothed surrogate -tau u + (u + sqrt(eps^2+u^2))/2
        // with u = x.theta - y: the curvature is eps^2 / (2 (eps^2+u^2)^{3/2}).
        let x = data.feature_row(i);
        let u = dot(theta, x) - data.response().expect("validated")[i];
        let c = 0.5 * eps * eps / (eps * eps + u * u).powf(1.5);
        for a in 0..x.len() {
            for b in 0..x.len() {
                out[[a, b]] += c * x[a] * x[b];
            }
        }
        true
    }
}

// ---------------------------------------------------------------------
// Soft-margin SVM, hinge loss
// ---------------------------------------------------------------------

/// Soft-margin SVM with hinge loss:
/// `l = lambda ||theta||^2 / 2 + max(0, 1 - y theta.x)` and subgradient
/// `g = lambda theta - y 1{y theta.x <= 1} x`.
#[derive(Debug, Clone, Copy)]
pub struct HingeSvm {
    lambda: f64,
}

/// Hinge-SVM constructor; the ridge weight `lambda` must be positive.
pub fn hinge_svm(lambda: f64) -> HingeSvm {
    assert!(lambda > 0.0, "hinge_svm: lambda must be positive");
    HingeSvm { lambda }
}

impl LossModel for HingeSvm {
    fn dim(&self, data: &Dataset) -> usize {
        data.p()
    }

    fn name(&self) -> &'static str {
        "hinge_svm"
    }

    fn validate(&self, data: &Dataset) -> Result<(), LossError> {
        if data.labels().is_none() {
            return Err(LossError::MissingLabels { model: self.name() });
        }
        Ok(())
    }

    fn loss(&self, data: &Dataset, i: usize, theta: &[f64]) -> f64 {
        let y = data.labels().expect("validated")[i];
        let u = 1.0 - y * dot(theta, data.feature_row(i));
        let sq: f64 = theta.iter().map(|t| t * t).sum();
        0.5 * self.lambda * sq + u.max(0.0)
    }

    fn moment_into(&self, data: &Dataset, i: usize, theta: &[f64], out: &mut [f64]) {
        let x = data.feature_row(i);
        let y = data.labels().expect("validated")[i];
        let active = y * dot(theta, x) <= 1.0;
        for ((o, &t), &xj) in out.iter_mut().zip(theta.iter()).zip(x.iter()) {
            *o = self.lambda * t - if active { y * xj } else { 0.0 };
        }
    }

    fn add_hessian(
        &self,
        data: &Dataset,
        i: usize,
        theta: &[f64],
        eps: f64,
        out: &mut Array2<f64>,
    ) -> bool {
        // Smoothed surrogate (u + sqrt(eps^2+u^2))/2, u = 1 - y theta.x.
        let x = data.feature_row(i);
        let y = data.labels().expect("validated")[i];
        let u = 1.0 - y * dot(theta, x);
        let c = 0.5 * eps * eps / (eps * eps + u * u).powf(1.5);
        for a in 0..x.len() {
            for b in 0..x.len() {
                out[[a, b]] += c * x[a] * x[b];
            }
            out[[a, a]] += self.lambda;
        }
        true
    }
}

// ---------------------------------------------------------------------
// Soft-margin SVM, smoothed hinge loss
// ---------------------------------------------------------------------

/// Soft-margin SVM with the smoothed hinge
/// `l = lambda ||theta||^2 / 2 + (sqrt(u^2 + eps^2) + u)/2`,
/// `u = 1 - y theta.x`; everywhere differentiable.
#[derive(Debug, Clone, Copy)]
pub struct SmoothedHingeSvm {
    lambda: f64,
    eps: f64,
}

/// Smoothed-hinge constructor; both hyperparameters must be positive.
pub fn smoothed_hinge_svm(lambda: f64, eps: f64) -> SmoothedHingeSvm {
    assert!(lambda > 0.0, "smoothed_hinge_svm: lambda must be positive");
    assert!(eps > 0.0, "smoothed_hinge_svm: eps must be positive");
    SmoothedHingeSvm { lambda, eps }
}

impl LossModel for SmoothedHingeSvm {
    fn dim(&self, data: &Dataset) -> usize {
        data.p()
    }

    fn name(&self) -> &'static str {
        "smoothed_hinge_svm"
    }

    fn validate(&self, data: &Dataset) -> Result<(), LossError> {
        if data.labels().is_none() {
            return Err(LossError::MissingLabels { model: self.name() });
        }
        Ok(())
    }

    fn loss(&self, data: &Dataset, i: usize, theta: &[f64]) -> f64 {
        let y = data.labels().expect("validated")[i];
        let u = 1.0 - y * dot(theta, data.feature_row(i));
        let sq: f64 = theta.iter().map(|t| t * t).sum();
        0.5 * self.lambda * sq + 0.5 * ((u * u + self.eps * self.eps).sqrt() + u)
    }

    fn moment_into(&self, data: &Dataset, i: usize, theta: &[f64], out: &mut [f64]) {
        let x = data.feature_row(i);
        let y = data.labels().expect("validated")[i];
        let u = 1.0 - y * dot(theta, x);
        let w = 0.5 * (1.0 + u / (u * u + self.eps * self.eps).sqrt());
        for ((o, &t), &xj) in out.iter_mut().zip(theta.iter()).zip(x.iter()) {
            *o = self.lambda * t - w * y * xj;
        }
    }

    fn add_hessian(
        &self,
        data: &Dataset,
        i: usize,
        theta: &[f64],
        _eps: f64,
        out: &mut Array2<f64>,
    ) -> bool {
        // Already smooth; the model's own eps sets the curvature scale.
        let x = data.feature_row(i);
        let y = data.labels().expect("validated")[i];
        let u = 1.0 - y * dot(theta, x);
        let e2 = self.eps * self.eps;
        let c = 0.5 * e2 / (e2 + u * u).powf(1.5);
        for a in 0..x.len() {
            for b in 0..x.len() {
                out[[a, b]] += c * x[a] * x[b];
            }
            out[[a, a]] += self.lambda;
        }
        true
    }
}

// ---------------------------------------------------------------------
// Huber loss on a sigmoid unit
// ---------------------------------------------------------------------

/// Huber loss on the residual of a scaled sigmoid unit:
/// `r = y - theta_3 S(theta_1 x_1 + theta_2 x_2)` with
/// `l = r^2/2` for `|r| <= delta` and `delta |r| - delta^2/2` beyond.
/// The parameter dimension is fixed at 3 and the dataset must have two
/// feature columns. Non-convex in theta.
#[derive(Debug, Clone, Copy)]
pub struct HuberSigmoid {
    delta: f64,
}

/// Huber-sigmoid constructor; the cutoff `delta` must be positive.
pub fn huber_sigmoid(delta: f64) -> HuberSigmoid {
    assert!(delta > 0.0, "huber_sigmoid: delta must be positive");
    HuberSigmoid { delta }
}

impl HuberSigmoid {
    /// (residual, sigmoid value, linear index) at observation i.
    fn parts(&self, data: &Dataset, i: usize, theta: &[f64]) -> (f64, f64, f64) {
        let x = data.feature_row(i);
        let z = theta[0] * x[0] + theta[1] * x[1];
        let s = sigmoid(z);
        let r = data.response().expect("validated")[i] - theta[2] * s;
        (r, s, z)
    }
}

impl LossModel for HuberSigmoid {
    fn dim(&self, _data: &Dataset) -> usize {
        3
    }

    fn name(&self) -> &'static str {
        "huber_sigmoid"
    }

    fn validate(&self, data: &Dataset) -> Result<(), LossError> {
        if data.response().is_none() {
            return Err(LossError::MissingResponse { model: self.name() });
        }
        if data.p() != 2 {
            return Err(LossError::FeatureCount { model: self.name(), expected: 2, got: data.p() });
        }
        Ok(())
    }

    fn loss(&self, data: &Dataset, i: usize, theta: &[f64]) -> f64 {
        let (r, _, _) = self.parts(data, i, theta);
        if r.abs() <= self.delta {
            0.5 * r * r
        } else {
            self.delta * r.abs() - 0.5 * self.delta * self.delta
        }
    }

    fn moment_into(&self, data: &Dataset, i: usize, theta: &[f64], out: &mut [f64]) {
        let x = data.feature_row(i);
        let (r, s, _) = self.parts(data, i, theta);
        // quadratic branch at |r| = delta
        let psi = if r.abs() <= self.delta { r } else { self.delta * r.signum() };
        let sp = s * (1.0 - s);
        out[0] = -psi * theta[2] * sp * x[0];
        out[1] = -psi * theta[2] * sp * x[1];
        out[2] = -psi * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};
    use rand::Rng;

    fn fd_gradient(
        model: &dyn LossModel,
        data: &Dataset,
        i: usize,
        theta: &[f64],
        h: f64,
    ) -> Vec<f64> {
        (0..theta.len())
            .map(|j| {
                let mut up = theta.to_vec();
                let mut dn = theta.to_vec();
                up[j] += h;
                dn[j] -= h;
                (model.loss(data, i, &up) - model.loss(data, i, &dn)) / (2.0 * h)
            })
            .collect()
    }

    fn random_regression(n: usize, p: usize, rng: &mut impl Rng) -> Dataset {
        let x = Array2::from_shape_fn((n, p), |_| rng.gen_range(-2.0..2.0));
        let y = Array1::from_shape_fn(n, |_| rng.gen_range(-2.0..2.0));
        Dataset::regression(x, y).unwrap()
    }

    fn random_classification(n: usize, p: usize, rng: &mut impl Rng) -> Dataset {
        let x = Array2::from_shape_fn((n, p), |_| rng.gen_range(-2.0..2.0));
        let l = Array1::from_shape_fn(n, |_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
        Dataset::classification(x, l).unwrap()
    }

    #[test]
    fn squared_loss_symmetric_two_point() {
        let data = Dataset::location(array![0.0, 2.0]).unwrap();
        let model = squared_loss();
        // both residuals are 1, so the mean of (x - theta)^2 / 2 is 1/2
        assert_eq!(empirical_risk(&model, &data, &[1.0]).unwrap(), 0.5);
        let g = moment_matrix(&model, &data, &[1.0]).unwrap();
        assert_eq!(g, array![[1.0], [-1.0]]);
    }

    #[test]
    fn check_loss_zero_residual_and_moment_row() {
        let data = Dataset::regression(array![[1.0]], array![1.0]).unwrap();
        let model = check_loss(0.5);
        assert_eq!(empirical_risk(&model, &data, &[1.0]).unwrap(), 0.0);

        let below = Dataset::regression(array![[1.0]], array![0.0]).unwrap();
        let g = moment_matrix(&model, &below, &[1.0]).unwrap();
        assert_eq!(g, array![[0.5]]);

        // tie convention: y = x.theta keeps the strict indicator at 0
        let tie = Dataset::regression(array![[1.0]], array![1.0]).unwrap();
        let g = moment_matrix(&model, &tie, &[1.0]).unwrap();
        assert_eq!(g, array![[-0.5]]);
    }

    #[test]
    fn check_loss_median_is_half_abs_residual() {
        let model = check_loss(0.5);
        let data = Dataset::regression(array![[1.0]], array![-3.0]).unwrap();
        let r: f64 = -3.0 - 2.0;
        assert!((model.loss(&data, 0, &[2.0]) - r.abs() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn hinge_margin_satisfied_leaves_regularizer() {
        let data = Dataset::classification(array![[2.0, 0.0]], array![1.0]).unwrap();
        let model = hinge_svm(0.1);
        let risk = empirical_risk(&model, &data, &[1.0, 0.0]).unwrap();
        assert!((risk - 0.05).abs() < 1e-15);
        let g = moment_matrix(&model, &data, &[1.0, 0.0]).unwrap();
        assert_eq!(g, array![[0.1, 0.0]]);
    }

    #[test]
    fn hinge_kink_uses_active_branch() {
        // y theta.x = 1 exactly: indicator includes equality
        let data = Dataset::classification(array![[1.0, 0.0]], array![1.0]).unwrap();
        let model = hinge_svm(0.1);
        let g = moment_matrix(&model, &data, &[1.0, 0.0]).unwrap();
        assert_eq!(g, array![[0.1 - 1.0, 0.0]]);
    }

    #[test]
    fn smoothed_hinge_close_to_hinge_at_kink() {
        // at u = 0 the gap is exactly eps/2
        let data = Dataset::classification(array![[1.0]], array![1.0]).unwrap();
        for eps in [0.5, 0.1, 0.01] {
            let smooth = smoothed_hinge_svm(0.1, eps);
            let hinge = hinge_svm(0.1);
            let gap = smooth.loss(&data, 0, &[1.0]) - hinge.loss(&data, 0, &[1.0]);
            assert!((gap - eps / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn huber_zero_residual_zero_gradient() {
        let data =
            Dataset::regression(array![[0.5, -0.5]], array![3.0 * sigmoid(0.5 - 1.0)]).unwrap();
        let model = huber_sigmoid(2.0);
        let theta = [1.0, 2.0, 3.0];
        assert!(model.loss(&data, 0, &theta).abs() < 1e-22);
        let g = moment_matrix(&model, &data, &theta).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-11));
    }

    #[test]
    fn finite_difference_matches_smooth_gradients() {
        let mut rng = crate::rng::substream(11, crate::rng::Domain::Data, 0, 0);
        let reg = random_regression(20, 2, &mut rng);
        let cls = random_classification(20, 2, &mut rng);
        let sig = random_regression(20, 2, &mut rng);

        for trial in 0..100 {
            let th2: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let th3: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let i = trial % 20;

            let sq = squared_loss();
            let g = moment_matrix(&sq, &reg, &th2).unwrap();
            let fd = fd_gradient(&sq, &reg, i, &th2, 1e-6);
            for j in 0..2 {
                assert!((g[[i, j]] - fd[j]).abs() < 1e-5);
            }

            let sh = smoothed_hinge_svm(0.1, 0.5);
            let g = moment_matrix(&sh, &cls, &th2).unwrap();
            let fd = fd_gradient(&sh, &cls, i, &th2, 1e-6);
            for j in 0..2 {
                assert!((g[[i, j]] - fd[j]).abs() < 1e-5);
            }

            let hu = huber_sigmoid(2.0);
            // skip probes too close to the |r| = delta kink
            let (r, _, _) = hu.parts(&sig, i, &th3);
            if (r.abs() - 2.0).abs() > 1e-3 {
                let g = moment_matrix(&hu, &sig, &th3).unwrap();
                let fd = fd_gradient(&hu, &sig, i, &th3, 1e-6);
                for j in 0..3 {
                    assert!((g[[i, j]] - fd[j]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn subgradient_inequality_at_kinks() {
        // hinge at the margin boundary and check loss at a residual tie:
        // l(theta') >= l(theta) + g.(theta' - theta) for convex losses.
        let cls = Dataset::classification(array![[1.0, -0.5]], array![1.0]).unwrap();
        let hinge = hinge_svm(0.1);
        let theta = [1.0, 0.0]; // y theta.x = 1 exactly
        let mut g = [0.0; 2];
        hinge.moment_into(&cls, 0, &theta, &mut g);

        let reg = Dataset::regression(array![[1.0, 2.0]], array![5.0]).unwrap();
        let check = check_loss(0.3);
        let theta_c = [1.0, 2.0]; // fit = 5 = y exactly
        let mut gc = [0.0; 2];
        check.moment_into(&reg, 0, &theta_c, &mut gc);

        let mut rng = crate::rng::substream(13, crate::rng::Domain::Data, 0, 0);
        for _ in 0..200 {
            let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for t in [1e-3, 1e-2, 0.1] {
                let th: Vec<f64> = theta.iter().zip(&v).map(|(a, b)| a + t * b).collect();
                let lhs = hinge.loss(&cls, 0, &th);
                let rhs = hinge.loss(&cls, 0, &theta) + t * (g[0] * v[0] + g[1] * v[1]);
                assert!(lhs >= rhs - 1e-12);

                let thc: Vec<f64> = theta_c.iter().zip(&v).map(|(a, b)| a + t * b).collect();
                let lhs = check.loss(&reg, 0, &thc);
                let rhs = check.loss(&reg, 0, &theta_c) + t * (gc[0] * v[0] + gc[1] * v[1]);
                assert!(lhs >= rhs - 1e-12);
            }
        }
    }

    #[test]
    fn risk_is_order_independent() {
        let mut rng = crate::rng::substream(17, crate::rng::Domain::Data, 0, 0);
        let data = random_regression(500, 2, &mut rng);
        let model = squared_loss();
        let theta = [0.3, -0.7];
        let base = empirical_risk(&model, &data, &theta).unwrap();

        let mut idx: Vec<usize> = (0..500).collect();
        for _ in 0..5 {
            // Fisher-Yates shuffle
            for i in (1..idx.len()).rev() {
                let j = rng.gen_range(0..=i);
                idx.swap(i, j);
            }
            let permuted = data.resample(&idx);
            let r = empirical_risk(&model, &permuted, &theta).unwrap();
            assert!((r - base).abs() <= 1e-12);
        }
    }

    #[test]
    fn dimension_and_column_errors() {
        let data = Dataset::location(array![1.0, 2.0]).unwrap();
        let model = squared_loss();
        assert!(matches!(
            empirical_risk(&model, &data, &[1.0, 2.0]),
            Err(LossError::DimensionMismatch { .. })
        ));
        let nolabel = hinge_svm(0.1);
        assert!(matches!(
            empirical_risk(&nolabel, &data, &[1.0]),
            Err(LossError::MissingLabels { .. })
        ));
    }
}

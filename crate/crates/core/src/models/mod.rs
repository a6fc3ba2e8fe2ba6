//! Sigmoidal classifiers `p(y=1 | θ, x) = σ(μ(θ, x))`, their priors, and the
//! unnormalized log posterior built from them.

mod logistic;
mod prior;
mod relu;

use alloc::vec;
use alloc::vec::Vec;

pub use logistic::LogisticRegression;
pub use prior::{GaussianPrior, Prior};
pub use relu::{ReluForward, ReluOneHidden, ReluOneParams};

use crate::data::Dataset;
use crate::math::{dlog_bernoulli, log_bernoulli};

/// One nonzero eigenpair of `∇∇μ`; `vector` is unit-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Evaluator bundle for a model whose outcome probability is `σ(μ(θ, x))`.
pub trait SigmoidalModel: Sync {
    /// Number of parameters `P`.
    fn param_dim(&self) -> usize;

    /// Expected feature-vector length.
    fn input_dim(&self) -> usize;

    fn mu(&self, theta: &[f64], x: &[f64]) -> f64;

    /// Writes `∇_θ μ` into `out` (length `P`) and returns `μ`.
    fn grad_mu(&self, theta: &[f64], x: &[f64], out: &mut [f64]) -> f64;

    /// Nonzero eigenpairs of `∇∇μ`, mutually orthonormal. Empty when the
    /// Hessian vanishes.
    fn hessian_spectrum(&self, theta: &[f64], x: &[f64]) -> Vec<EigenPair>;

    /// Whether `hessian_spectrum` is the complete Hessian, which is what the
    /// exact Jacobian determinant needs.
    fn exact_spectrum(&self) -> bool {
        true
    }

    /// Which piece of a piecewise-smooth `μ` contains `θ` at input `x`;
    /// empty for smooth models.
    fn activation_pattern(&self, _theta: &[f64], _x: &[f64]) -> Vec<u8> {
        Vec::new()
    }

    fn name(&self) -> &'static str;
}

/// `log ℓ(θ | x, y)`.
pub fn log_likelihood<M: SigmoidalModel + ?Sized>(model: &M, theta: &[f64], x: &[f64], y: u8) -> f64 {
    log_bernoulli(model.mu(theta, x), y)
}

/// `∇ log ℓ = (y − σ(μ)) ∇μ`.
pub fn grad_log_likelihood<M: SigmoidalModel + ?Sized>(model: &M, theta: &[f64], x: &[f64], y: u8) -> Vec<f64> {
    let mut g = vec![0.0; model.param_dim()];
    let mu = model.grad_mu(theta, x, &mut g);
    let s = dlog_bernoulli(mu, y);
    g.iter_mut().for_each(|v| *v *= s);
    g
}

/// `log π(θ) + Σ_i log ℓ(θ | d_i)`, with the evidence dropped.
pub fn log_posterior_unnorm<M, P>(model: &M, theta: &[f64], data: &Dataset, prior: &P) -> f64
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    let ll: f64 = (0..data.n())
        .map(|i| log_likelihood(model, theta, data.x(i), data.y(i)))
        .sum();
    prior.log_density(theta) + ll
}

/// `∇ log π(θ) + Σ_i ∇ log ℓ(θ | d_i)`.
pub fn grad_log_posterior<M, P>(model: &M, theta: &[f64], data: &Dataset, prior: &P) -> Vec<f64>
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    log_posterior_with_grad(model, theta, data, prior).1
}

/// Log posterior and its gradient in one pass over the data.
pub fn log_posterior_with_grad<M, P>(model: &M, theta: &[f64], data: &Dataset, prior: &P) -> (f64, Vec<f64>)
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    let dim = model.param_dim();
    let mut grad = vec![0.0; dim];
    prior.grad_log_density(theta, &mut grad);
    let mut lp = prior.log_density(theta);
    let mut gm = vec![0.0; dim];
    for i in 0..data.n() {
        let y = data.y(i);
        let mu = model.grad_mu(theta, data.x(i), &mut gm);
        lp += log_bernoulli(mu, y);
        let s = dlog_bernoulli(mu, y);
        for (g, d) in grad.iter_mut().zip(&gm) {
            *g += s * d;
        }
    }
    (lp, grad)
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use crate::matrix::RowMatrix;
    use proptest::prelude::*;

    fn data(rows: &[&[f64]], y: &[u8]) -> Dataset {
        let x = RowMatrix::from_rows(rows).unwrap();
        let names = (0..x.cols()).map(|j| alloc::format!("x{j}")).collect();
        Dataset::new(x, y.to_vec(), names).unwrap()
    }

    #[test]
    fn likelihood_values() {
        let m = LogisticRegression::new(2);
        assert!((log_likelihood(&m, &[1.0, -1.0], &[2.0, 1.0], 1) + 0.313_261_687_518_222_8).abs() < 1e-12);
        assert!((log_likelihood(&m, &[0.0, 0.0], &[2.0, 1.0], 0) + core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn likelihood_gradient_at_zero_logit() {
        let m = LogisticRegression::new(2);
        assert_eq!(grad_log_likelihood(&m, &[0.0, 0.0], &[1.0, 2.0], 1), vec![0.5, 1.0]);
        assert_eq!(grad_log_likelihood(&m, &[0.0, 0.0], &[1.0, 2.0], 0), vec![-0.5, -1.0]);
    }

    #[test]
    fn relu_inactive_units_have_no_first_layer_gradient() {
        let m = ReluOneHidden::new(2, 2);
        // W1 rows point away from x, so both z1 < 0.
        let theta = [-1.0, -1.0, -2.0, -0.5, 0.7, 0.3, 0.1];
        let g = grad_log_likelihood(&m, &theta, &[1.0, 1.0], 1);
        assert!(g[..4].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_feature_leaves_only_prior_gradient() {
        let m = LogisticRegression::new(1);
        let prior = GaussianPrior::isotropic(1, 1.0).unwrap();
        let d = data(&[&[0.0]], &[1]);
        assert_eq!(grad_log_posterior(&m, &[2.0], &d, &prior), vec![-2.0]);
    }

    #[test]
    fn single_observation_posterior_gradient_is_sum() {
        let m = LogisticRegression::new(2);
        let prior = GaussianPrior::new(vec![1.0, 2.0]).unwrap();
        let d = data(&[&[0.3, -1.2]], &[0]);
        let theta = [0.4, 0.9];
        let g = grad_log_posterior(&m, &theta, &d, &prior);
        let mut pg = vec![0.0; 2];
        prior.grad_log_density(&theta, &mut pg);
        let lg = grad_log_likelihood(&m, &theta, d.x(0), 0);
        for j in 0..2 {
            assert!((g[j] - (pg[j] + lg[j])).abs() < 1e-15);
        }
    }

    #[test]
    fn flat_prior_posterior_ratio_is_likelihood_ratio() {
        let m = LogisticRegression::new(1);
        let prior = GaussianPrior::isotropic(1, 1e6).unwrap();
        let d = data(&[&[1.5]], &[1]);
        let a = log_posterior_unnorm(&m, &[0.2], &d, &prior);
        let b = log_posterior_unnorm(&m, &[-0.7], &d, &prior);
        let lr = log_likelihood(&m, &[0.2], d.x(0), 1) - log_likelihood(&m, &[-0.7], d.x(0), 1);
        assert!(((a - b) - lr).abs() < 1e-9);
        assert_eq!(a, log_posterior_unnorm(&m, &[0.2], &d, &prior));
    }

    proptest! {
        #[test]
        fn logistic_posterior_gradient_matches_fd(
            xs in proptest::collection::vec(-2.0f64..2.0, 15),
            ys in proptest::collection::vec(0u8..2, 5),
            theta in proptest::collection::vec(-1.5f64..1.5, 3),
        ) {
            let rows: Vec<&[f64]> = xs.chunks(3).collect();
            let d = data(&rows, &ys);
            let m = LogisticRegression::new(3);
            let prior = GaussianPrior::new(vec![1.0, 0.5, 2.0]).unwrap();
            let g = grad_log_posterior(&m, &theta, &d, &prior);
            let fd = fd_grad(|t| log_posterior_unnorm(&m, t, &d, &prior), &theta, 1e-5);
            prop_assert!(rel_close(&g, &fd, 1e-5), "{g:?} vs {fd:?}");
        }

        #[test]
        fn relu_likelihood_gradient_matches_fd(
            theta in proptest::collection::vec(-1.5f64..1.5, 13),
            x in proptest::collection::vec(-2.0f64..2.0, 3),
            y in 0u8..2,
        ) {
            let m = ReluOneHidden::new(3, 3);
            let fwd = m.forward(&theta, &x);
            prop_assume!(fwd.z1.iter().all(|z| z.abs() > 1e-3));
            let g = grad_log_likelihood(&m, &theta, &x, y);
            let fd = fd_grad(|t| log_likelihood(&m, t, &x, y), &theta, 1e-5);
            prop_assert!(rel_close(&g, &fd, 1e-4), "{g:?} vs {fd:?}");
        }
    }
}

//! Scalar kernels shared across the crate: `libm` wrappers, stable sigmoid
//! forms, and log-sum-exp reductions.

pub use libm::{exp, expm1, fabs, log, log1p, sqrt};

/// Logistic sigmoid `1/(1+e^{-μ})`, evaluated on the branch that never
/// exponentiates a positive argument.
pub fn sigmoid(mu: f64) -> f64 {
    if mu >= 0.0 {
        1.0 / (1.0 + exp(-mu))
    } else {
        let e = exp(mu);
        e / (1.0 + e)
    }
}

/// `log σ(μ) = -log(1 + e^{-μ})`.
pub fn log_sigmoid(mu: f64) -> f64 {
    if mu >= 0.0 {
        -log1p(exp(-mu))
    } else {
        mu - log1p(exp(mu))
    }
}

/// `σ(μ)(1 - σ(μ))` without cancellation in `1 - σ`.
pub fn sigmoid_variance(mu: f64) -> f64 {
    let e = exp(-fabs(mu));
    e / ((1.0 + e) * (1.0 + e))
}

/// Bernoulli log-likelihood of label `y` under success logit `mu`.
pub fn log_bernoulli(mu: f64, y: u8) -> f64 {
    if y == 1 {
        log_sigmoid(mu)
    } else {
        log_sigmoid(-mu)
    }
}

/// `d log ℓ / dμ = y(1-σ) - (1-y)σ = y - σ(μ)`.
pub fn dlog_bernoulli(mu: f64, y: u8) -> f64 {
    if y == 1 {
        sigmoid(-mu)
    } else {
        -sigmoid(mu)
    }
}

/// `log Σ exp(v)`; `-∞` for an empty slice or when every entry is `-∞`.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|&v| exp(v - max)).sum();
    max + log(sum)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// `ln|x|`.
pub fn ln_abs(x: f64) -> f64 {
    log(fabs(x))
}

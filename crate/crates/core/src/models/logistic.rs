use alloc::vec::Vec;

use super::{EigenPair, SigmoidalModel};
use crate::math::dot;

/// Logistic regression, `μ = xᵀβ`. An intercept is a unit feature column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogisticRegression {
    p: usize,
}

impl LogisticRegression {
    pub fn new(p: usize) -> Self {
        Self { p }
    }
}

impl SigmoidalModel for LogisticRegression {
    fn param_dim(&self) -> usize {
        self.p
    }

    fn input_dim(&self) -> usize {
        self.p
    }

    #[inline]
    fn mu(&self, theta: &[f64], x: &[f64]) -> f64 {
        dot(theta, x)
    }

    #[inline]
    fn grad_mu(&self, theta: &[f64], x: &[f64], out: &mut [f64]) -> f64 {
        out.copy_from_slice(x);
        dot(theta, x)
    }

    /// `μ` is linear in `β`, so its Hessian vanishes.
    fn hessian_spectrum(&self, _theta: &[f64], _x: &[f64]) -> Vec<EigenPair> {
        Vec::new()
    }

    fn name(&self) -> &'static str {
        "logistic"
    }
}

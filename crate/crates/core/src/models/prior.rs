use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::log;

/// Prior density interface: anything exposing `log π(θ)` and its gradient.
pub trait Prior: Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, theta: &[f64]) -> f64;

    /// Writes `∇ log π(θ)` into `out`, overwriting it.
    fn grad_log_density(&self, theta: &[f64], out: &mut [f64]);
}

/// Independent zero-mean Gaussian components.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    sd: Vec<f64>,
    log_norm: f64,
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

impl GaussianPrior {
    pub fn new(sd: Vec<f64>) -> Result<Self> {
        if let Some(j) = sd.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Domain(format!(
                "prior sd for parameter {j} must be positive and finite, got {}",
                sd[j]
            )));
        }
        let log_norm = -sd.iter().map(|&s| log(s) + HALF_LN_2PI).sum::<f64>();
        Ok(Self { sd, log_norm })
    }

    pub fn isotropic(dim: usize, sd: f64) -> Result<Self> {
        Self::new(vec![sd; dim])
    }

    pub fn sd(&self) -> &[f64] {
        &self.sd
    }
}

impl Prior for GaussianPrior {
    fn dim(&self) -> usize {
        self.sd.len()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let q: f64 = theta
            .iter()
            .zip(&self.sd)
            .map(|(t, s)| {
                let z = t / s;
                z * z
            })
            .sum();
        self.log_norm - 0.5 * q
    }

    fn grad_log_density(&self, theta: &[f64], out: &mut [f64]) {
        for ((o, t), s) in out.iter_mut().zip(theta).zip(&self.sd) {
            *o = -t / (s * s);
        }
    }
}

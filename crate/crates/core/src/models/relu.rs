use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{EigenPair, SigmoidalModel};
use crate::error::Result;
use crate::math::{dot, sqrt};
use crate::matrix::RowMatrix;

/// One-hidden-layer ReLU network `μ = W2 a(W1 x) + b2`, `a(z) = max(z, 0)`.
///
/// Flattened parameter order: `W1` row-major (`d × p`), then `W2` (`d`),
/// then `b2`, so `P = d p + d + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReluOneHidden {
    d: usize,
    p: usize,
}

/// Structured view of a flattened ReLU-1 parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluOneParams {
    pub w1: RowMatrix,
    pub w2: Vec<f64>,
    pub b2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReluForward {
    pub mu: f64,
    pub z1: Vec<f64>,
    /// `1` iff `z1_k > 0`; the kink itself counts as inactive.
    pub mask: Vec<u8>,
}

impl ReluOneHidden {
    pub fn new(hidden: usize, inputs: usize) -> Self {
        Self { d: hidden, p: inputs }
    }

    pub fn hidden(&self) -> usize {
        self.d
    }

    #[inline]
    fn w2_offset(&self) -> usize {
        self.d * self.p
    }

    #[inline]
    fn b2_index(&self) -> usize {
        self.d * self.p + self.d
    }

    pub fn unflatten(&self, theta: &[f64]) -> Result<ReluOneParams> {
        let (d, p) = (self.d, self.p);
        let w1 = RowMatrix::from_vec(d, p, theta[..d * p].to_vec())?;
        Ok(ReluOneParams {
            w1,
            w2: theta[d * p..d * p + d].to_vec(),
            b2: theta[self.b2_index()],
        })
    }

    pub fn forward(&self, theta: &[f64], x: &[f64]) -> ReluForward {
        let (d, p) = (self.d, self.p);
        let mut mu = theta[self.b2_index()];
        let mut z1 = Vec::with_capacity(d);
        let mut mask = Vec::with_capacity(d);
        for k in 0..d {
            let z = dot(&theta[k * p..(k + 1) * p], x);
            z1.push(z);
            if z > 0.0 {
                mask.push(1);
                mu += theta[self.w2_offset() + k] * z;
            } else {
                mask.push(0);
            }
        }
        ReluForward { mu, z1, mask }
    }

    /// Names matching the flattening order, e.g. `W1[0,2]`, `W2[1]`, `b2`.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.param_dim());
        for k in 0..self.d {
            for j in 0..self.p {
                names.push(format!("W1[{k},{j}]"));
            }
        }
        names.extend((0..self.d).map(|k| format!("W2[{k}]")));
        names.push(String::from("b2"));
        names
    }
}

impl ReluOneParams {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.w1.as_slice().to_vec();
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn forward(&self, x: &[f64]) -> ReluForward {
        let m = ReluOneHidden::new(self.w1.rows(), self.w1.cols());
        m.forward(&self.flatten(), x)
    }
}

impl SigmoidalModel for ReluOneHidden {
    fn param_dim(&self) -> usize {
        self.d * self.p + self.d + 1
    }

    fn input_dim(&self) -> usize {
        self.p
    }

    fn mu(&self, theta: &[f64], x: &[f64]) -> f64 {
        let p = self.p;
        let mut mu = theta[self.b2_index()];
        for k in 0..self.d {
            let z = dot(&theta[k * p..(k + 1) * p], x);
            if z > 0.0 {
                mu += theta[self.w2_offset() + k] * z;
            }
        }
        mu
    }

    fn grad_mu(&self, theta: &[f64], x: &[f64], out: &mut [f64]) -> f64 {
        let p = self.p;
        let off = self.w2_offset();
        let mut mu = theta[self.b2_index()];
        for k in 0..self.d {
            let z = dot(&theta[k * p..(k + 1) * p], x);
            let row = &mut out[k * p..(k + 1) * p];
            if z > 0.0 {
                let w2 = theta[off + k];
                mu += w2 * z;
                for (o, xj) in row.iter_mut().zip(x) {
                    *o = w2 * xj;
                }
                out[off + k] = z;
            } else {
                row.iter_mut().for_each(|o| *o = 0.0);
                out[off + k] = 0.0;
            }
        }
        out[self.b2_index()] = 1.0;
        mu
    }

    /// For each active unit `k`, `u_k = x` couples the `W1` row `k` block
    /// with `W2_k`, giving eigenvalues `±|x|` with eigenvectors
    /// `(x/(√2|x|), ±e_k/√2, 0)`.
    fn hessian_spectrum(&self, theta: &[f64], x: &[f64]) -> Vec<EigenPair> {
        let p = self.p;
        let norm = sqrt(dot(x, x));
        if norm == 0.0 {
            return Vec::new();
        }
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let mut pairs = Vec::new();
        for k in 0..self.d {
            let z = dot(&theta[k * p..(k + 1) * p], x);
            if z <= 0.0 {
                continue;
            }
            for sign in [1.0, -1.0] {
                let mut v = vec![0.0; self.param_dim()];
                for (vj, xj) in v[k * p..(k + 1) * p].iter_mut().zip(x) {
                    *vj = s * xj / norm;
                }
                v[self.w2_offset() + k] = sign * s;
                pairs.push(EigenPair {
                    value: sign * norm,
                    vector: v,
                });
            }
        }
        pairs
    }

    fn activation_pattern(&self, theta: &[f64], x: &[f64]) -> Vec<u8> {
        self.forward(theta, x).mask
    }

    fn name(&self) -> &'static str {
        "relu1"
    }
}

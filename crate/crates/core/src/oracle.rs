//! Exact references for small problems: tensor-grid posteriors with exact
//! LOO expectations, and finite-difference Jacobians.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::{Dataset, PosteriorDraws};
use crate::error::{Error, Result};
use crate::math::{exp, fabs, log, logsumexp};
use crate::matrix::RowMatrix;
use crate::models::{log_likelihood, log_posterior_unnorm, Prior, SigmoidalModel};

pub const MAX_GRID_DIM: usize = 3;
pub const MIN_NODES_PER_DIM: usize = 41;

/// Discretized posterior on a uniform tensor grid including the bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPosterior {
    pub nodes: RowMatrix,
    pub log_unnorm: Vec<f64>,
    pub log_cell_volume: f64,
    /// `logsumexp(log_unnorm) + log_cell_volume`.
    pub log_norm_const: f64,
    pub bounds: Vec<(f64, f64)>,
    pub nodes_per_dim: usize,
}

impl GridPosterior {
    pub fn spacing(&self) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|(lo, hi)| (hi - lo) / (self.nodes_per_dim - 1) as f64)
            .collect()
    }

    /// Node probabilities `exp(log_unnorm + log_cell_volume − log_norm_const)`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.log_unnorm
            .iter()
            .map(|&l| exp(l + self.log_cell_volume - self.log_norm_const))
            .collect()
    }

    /// Posterior expectation of `f` on the grid.
    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.probabilities()
            .iter()
            .zip(self.nodes.iter_rows())
            .map(|(p, t)| p * f(t))
            .sum()
    }

    /// Node probabilities of the leave-`i`-out grid posterior,
    /// `∝ π(θ|D) / ℓ(θ|d_i)`.
    pub fn loo_probabilities<M: SigmoidalModel + ?Sized>(&self, model: &M, data: &Dataset, i: usize) -> Vec<f64> {
        let (x, y) = (data.x(i), data.y(i));
        let lw: Vec<f64> = self
            .nodes
            .iter_rows()
            .zip(&self.log_unnorm)
            .map(|(t, l)| l - log_likelihood(model, t, x, y))
            .collect();
        let z = logsumexp(&lw);
        lw.iter().map(|l| exp(l - z)).collect()
    }

    /// Draws `s` samples: a node by its probability, then uniform jitter
    /// within the node's cell, which makes the sample continuous.
    pub fn sample<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> Result<PosteriorDraws> {
        let probs = self.probabilities();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        let h = self.spacing();
        let dim = self.nodes.cols();
        let mut out = RowMatrix::zeros(s, dim);
        for k in 0..s {
            let u: f64 = rng.random::<f64>() * acc;
            let j = cdf.partition_point(|&c| c < u).min(probs.len() - 1);
            let row = out.row_mut(k);
            for a in 0..dim {
                row[a] = self.nodes.get(j, a) + (rng.random::<f64>() - 0.5) * h[a];
            }
        }
        PosteriorDraws::unnamed(out)
    }
}

/// Evaluates `log π(θ) + Σ log ℓ` on a uniform grid over `bounds`.
pub fn build_grid_posterior<M, P>(
    model: &M,
    data: &Dataset,
    prior: &P,
    bounds: &[(f64, f64)],
    nodes_per_dim: usize,
) -> Result<GridPosterior>
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    let dim = model.param_dim();
    if dim > MAX_GRID_DIM {
        return Err(Error::OracleRefused(format!(
            "{dim} parameters exceeds the grid limit of {MAX_GRID_DIM}"
        )));
    }
    if nodes_per_dim < MIN_NODES_PER_DIM {
        return Err(Error::OracleRefused(format!(
            "need at least {MIN_NODES_PER_DIM} nodes per dimension, got {nodes_per_dim}"
        )));
    }
    if bounds.len() != dim {
        return Err(Error::Dimension {
            what: "grid bounds",
            expected: dim,
            actual: bounds.len(),
        });
    }
    if let Some((lo, hi)) = bounds.iter().find(|(lo, hi)| !(lo < hi)) {
        return Err(Error::Domain(format!("empty grid interval [{lo}, {hi}]")));
    }

    let total = nodes_per_dim.pow(dim as u32);
    let step: Vec<f64> = bounds
        .iter()
        .map(|(lo, hi)| (hi - lo) / (nodes_per_dim - 1) as f64)
        .collect();
    let mut nodes = RowMatrix::zeros(total, dim);
    let mut log_unnorm = Vec::with_capacity(total);
    for j in 0..total {
        let mut rem = j;
        let row = nodes.row_mut(j);
        for a in (0..dim).rev() {
            row[a] = bounds[a].0 + (rem % nodes_per_dim) as f64 * step[a];
            rem /= nodes_per_dim;
        }
        log_unnorm.push(log_posterior_unnorm(model, nodes.row(j), data, prior));
    }
    let log_cell_volume: f64 = step.iter().map(|h| log(*h)).sum();
    let log_norm_const = logsumexp(&log_unnorm) + log_cell_volume;
    Ok(GridPosterior {
        nodes,
        log_unnorm,
        log_cell_volume,
        log_norm_const,
        bounds: bounds.to_vec(),
        nodes_per_dim,
    })
}

/// Exact leave-`i`-out expectation of `f` on the grid.
pub fn exact_loo_expectation<M: SigmoidalModel + ?Sized>(
    grid: &GridPosterior,
    model: &M,
    data: &Dataset,
    i: usize,
    f: impl Fn(&[f64]) -> f64,
) -> f64 {
    grid.loo_probabilities(model, data, i)
        .iter()
        .zip(grid.nodes.iter_rows())
        .map(|(w, t)| w * f(t))
        .sum()
}

/// Central-difference Jacobian `J_ab = ∂φ_a/∂θ_b`.
pub fn finite_difference_jacobian(map: impl Fn(&[f64]) -> Vec<f64>, theta: &[f64], steps: &[f64]) -> RowMatrix {
    let p = theta.len();
    let mut t = theta.to_vec();
    let mut jac = RowMatrix::zeros(p, p);
    for b in 0..p {
        t[b] = theta[b] + steps[b];
        let up = map(&t);
        t[b] = theta[b] - steps[b];
        let dn = map(&t);
        t[b] = theta[b];
        for a in 0..p {
            jac.set(a, b, (up[a] - dn[a]) / (2.0 * steps[b]));
        }
    }
    jac
}

/// `log|det A|` by Gaussian elimination with partial pivoting; `-∞` when
/// singular.
pub fn log_abs_det(a: &RowMatrix) -> f64 {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = a.iter_rows().map(|r| r.to_vec()).collect();
    let mut ld = 0.0;
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&x, &y| fabs(m[x][c]).total_cmp(&fabs(m[y][c])))
            .expect("non-empty pivot range");
        m.swap(c, piv);
        let d = m[c][c];
        if d == 0.0 {
            return f64::NEG_INFINITY;
        }
        ld += log(fabs(d));
        for r in c + 1..n {
            let f = m[r][c] / d;
            if f != 0.0 {
                for k in c..n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    ld
}

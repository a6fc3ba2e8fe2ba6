//! Seeded synthetic logistic-regression problems with Gaussian-prior
//! posteriors approximated by an inflated Laplace proposal.
//!
//! Features are iid standard normal, the first `informative` coefficients
//! alternate `±signal` and the rest are zero. Draws come from
//! `N(θ_MAP, inflation² H⁻¹)` where `H` is the negative log-posterior
//! Hessian at the mode; `inflation > 1` widens the proposal relative to the
//! posterior, which produces heavy-tailed leave-one-out weights. The
//! default prior scale is `1/√p`.

use loo_adapt_core::math::{log_bernoulli, sigmoid};
use loo_adapt_core::{Dataset, GaussianPrior, PosteriorDraws, RowMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    pub informative: usize,
    pub signal: f64,
    pub prior_sd: f64,
    pub num_draws: usize,
    pub proposal_inflation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 50,
            p: 200,
            informative: 5,
            signal: 1.0,
            prior_sd: unit_scale_prior_sd(200),
            num_draws: 2000,
            proposal_inflation: 2.0,
            seed: 20240,
        }
    }
}

/// Prior sd giving each linear predictor `x·θ` unit prior scale when the
/// features have unit variance.
pub fn unit_scale_prior_sd(p: usize) -> f64 {
    1.0 / (p.max(1) as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    pub data: Dataset,
    pub draws: PosteriorDraws,
    pub prior: GaussianPrior,
    pub true_beta: Vec<f64>,
    pub map: Vec<f64>,
}

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-10;

impl SyntheticSpec {
    pub fn generate(&self) -> Result<SyntheticProblem> {
        let (n, p) = (self.n, self.p);
        if n == 0 || p == 0 || self.num_draws < 2 {
            return Err(Error::Numerical(
                "synthetic problem needs n, p ≥ 1 and at least two draws".into(),
            ));
        }
        if !(self.prior_sd > 0.0 && self.proposal_inflation > 0.0) {
            return Err(Error::Numerical(
                "prior_sd and proposal_inflation must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);

        let true_beta: Vec<f64> = (0..p)
            .map(|j| match j {
                j if j < self.informative && j % 2 == 0 => self.signal,
                j if j < self.informative => -self.signal,
                _ => 0.0,
            })
            .collect();
        let x = DMatrix::<f64>::from_fn(n, p, |_, _| rng.sample(StandardNormal));
        let eta = &x * DVector::from_column_slice(&true_beta);
        let y: Vec<u8> = eta
            .iter()
            .map(|&e| u8::from(rng.random::<f64>() < sigmoid(e)))
            .collect();

        let map = newton_map(&x, &y, self.prior_sd)?;
        let h = neg_hessian(&x, &map, self.prior_sd);
        let chol = h
            .cholesky()
            .ok_or_else(|| Error::Numerical("negative log-posterior Hessian is not positive definite".into()))?;
        let upper = chol.l().transpose();

        let mut values = Vec::with_capacity(self.num_draws * p);
        for _ in 0..self.num_draws {
            let z = DVector::<f64>::from_fn(p, |_, _| rng.sample(StandardNormal));
            // Solving Lᵀ u = z gives u with covariance (L Lᵀ)⁻¹ = H⁻¹.
            let u = upper
                .solve_upper_triangular(&z)
                .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
            values.extend(map.iter().zip(u.iter()).map(|(m, u)| m + self.proposal_inflation * u));
        }

        let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        let features = RowMatrix::from_vec(n, p, x.transpose().as_slice().to_vec())?;
        let data = Dataset::new(features, y, names)?;
        let draws = PosteriorDraws::new(
            RowMatrix::from_vec(self.num_draws, p, values)?,
            (0..p).map(|j| format!("beta[{j}]")).collect(),
        )?;
        Ok(SyntheticProblem {
            data,
            draws,
            prior: GaussianPrior::isotropic(p, self.prior_sd)?,
            true_beta,
            map: map.iter().copied().collect(),
        })
    }
}

fn log_posterior(x: &DMatrix<f64>, y: &[u8], beta: &DVector<f64>, prior_sd: f64) -> f64 {
    let eta = x * beta;
    let ll: f64 = eta.iter().zip(y).map(|(&e, &yi)| log_bernoulli(e, yi)).sum();
    ll - 0.5 * beta.norm_squared() / (prior_sd * prior_sd)
}

fn neg_hessian(x: &DMatrix<f64>, beta: &DVector<f64>, prior_sd: f64) -> DMatrix<f64> {
    let eta = x * beta;
    let w = DVector::from_iterator(eta.len(), eta.iter().map(|&e| sigmoid(e) * (1.0 - sigmoid(e))));
    let mut xw = x.clone();
    for (mut row, wi) in xw.row_iter_mut().zip(w.iter()) {
        row *= *wi;
    }
    let mut h = x.transpose() * xw;
    for j in 0..h.nrows() {
        h[(j, j)] += 1.0 / (prior_sd * prior_sd);
    }
    h
}

/// Damped Newton ascent on the log posterior.
fn newton_map(x: &DMatrix<f64>, y: &[u8], prior_sd: f64) -> Result<DVector<f64>> {
    let p = x.ncols();
    let mut beta = DVector::<f64>::zeros(p);
    let mut f = log_posterior(x, y, &beta, prior_sd);
    for _ in 0..NEWTON_MAX_ITER {
        let eta = x * &beta;
        let resid = DVector::from_iterator(y.len(), eta.iter().zip(y).map(|(&e, &yi)| yi as f64 - sigmoid(e)));
        let grad = x.transpose() * resid - &beta / (prior_sd * prior_sd);
        let step = neg_hessian(x, &beta, prior_sd)
            .cholesky()
            .ok_or_else(|| Error::Numerical("Newton Hessian is not positive definite".into()))?
            .solve(&grad);
        let mut t = 1.0;
        loop {
            let cand = &beta + &step * t;
            let fc = log_posterior(x, y, &cand, prior_sd);
            if fc >= f || t < 1e-8 {
                beta = cand;
                f = fc;
                break;
            }
            t *= 0.5;
        }
        if grad.amax() < NEWTON_TOL {
            return Ok(beta);
        }
    }
    Ok(beta)
}

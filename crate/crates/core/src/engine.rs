//! Importance-sampling leave-one-out: raw and transformed weights, the
//! per-observation adaptation loop, and the aggregate report.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{marginal_stats, Dataset, MarginalStats, PosteriorDraws, RunConfig};
use crate::error::{Error, Result};
use crate::math::{exp, log, log_bernoulli, logsumexp, sigmoid, sqrt};
use crate::matrix::RowMatrix;
use crate::metrics::{auprc, auroc, pr_curve, roc_curve, CurvePoint};
use crate::models::{log_likelihood, log_posterior_unnorm, Prior, SigmoidalModel};
use crate::psis::{pareto_smooth, GpdFit, TailStatus, WeightVector};
use crate::transforms::{
    apply_gradient_transform, apply_pmm, PosteriorCache, TransformKind, TransformSpec, TransformedDraws,
};

/// Evaluator for a variational approximation `log π̂(θ|D)`, known up to an
/// additive constant.
pub trait VariationalDensity: Sync {
    fn log_density(&self, theta: &[f64]) -> f64;
}

/// Mean-field Gaussian approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldGaussian {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl MeanFieldGaussian {
    pub fn new(mean: Vec<f64>, sd: Vec<f64>) -> Result<Self> {
        if mean.len() != sd.len() {
            return Err(Error::Dimension {
                what: "variational sd",
                expected: mean.len(),
                actual: sd.len(),
            });
        }
        if sd.iter().any(|&s| !(s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Domain("variational sd must be positive and finite".into()));
        }
        Ok(Self { mean, sd })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

impl VariationalDensity for MeanFieldGaussian {
    fn log_density(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.mean)
            .zip(&self.sd)
            .map(|((t, m), s)| {
                let z = (t - m) / s;
                -0.5 * z * z - log(*s)
            })
            .sum()
    }
}

/// One tried `(transform, h̄)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub spec: TransformSpec,
    #[serde(with = "crate::serde_f64")]
    pub khat: f64,
    pub tail_status: TailStatus,
    #[serde(with = "crate::serde_f64")]
    pub h_used: f64,
    pub exact_jacobian: bool,
    /// The step rule gave `h = 0`, so the map is the identity.
    pub degenerate: bool,
    /// The transform cannot be built for this observation (PMM2 with a
    /// constant parameter column).
    pub unavailable: bool,
    pub singular_draws: usize,
    pub nonfinite_draws: usize,
    pub kink_crossings: usize,
    /// `max |φ − θ| / sd` over draws and components.
    #[serde(with = "crate::serde_f64")]
    pub max_step_sd: f64,
}

/// Adaptation outcome and LOO estimates for one held-out observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationResult {
    pub index: usize,
    #[serde(with = "crate::serde_f64")]
    pub raw_khat: f64,
    pub raw_tail_status: TailStatus,
    /// `final_khat ≤ khat_threshold`.
    pub adapted: bool,
    /// Raw weights already passed; no transform was tried.
    pub raw_sufficient: bool,
    pub winning_transform: Option<TransformSpec>,
    #[serde(with = "crate::serde_f64")]
    pub final_khat: f64,
    pub final_weights: WeightVector,
    pub loo_predictive_prob: f64,
    pub loo_predictive_prob_se: f64,
    /// `log Σ_k w_k ℓ(φ_k | d_i)`.
    pub loo_log_predictive_density: f64,
    /// Standard error of `Σ_k w_k ℓ(φ_k | d_i)` on the density scale.
    pub loo_density_se: f64,
    pub effective_sample_size: f64,
    pub attempts: Vec<AttemptRecord>,
}

/// Per-observation results and aggregate LOO summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub per_observation: Vec<ObservationResult>,
    #[serde(with = "crate::serde_f64")]
    pub loo_ic: f64,
    /// Delta-method standard error, treating observations as independent.
    pub loo_ic_se: f64,
    pub n_failed: usize,
    pub roc_points: Vec<CurvePoint>,
    pub prc_points: Vec<CurvePoint>,
    /// Absent when labels hold a single class.
    #[serde(with = "crate::serde_f64::option")]
    pub auroc: Option<f64>,
    #[serde(with = "crate::serde_f64::option")]
    pub auprc: Option<f64>,
}

/// `ν_k ∝ 1/ℓ(θ_k | d_i)`.
pub fn nu_weights<M: SigmoidalModel + ?Sized>(
    model: &M,
    draws: &PosteriorDraws,
    data: &Dataset,
    i: usize,
) -> Result<WeightVector> {
    let (x, y) = (data.x(i), data.y(i));
    let lw = draws
        .values()
        .iter_rows()
        .map(|t| -log_likelihood(model, t, x, y))
        .collect();
    WeightVector::from_log_weights(lw)
}

/// `log η_k = log J_k − log ℓ(φ_k|d_i) + log π(φ_k|D) − log π(θ_k|D)`.
/// Returns the weights and the number of draws zeroed for being singular or
/// non-finite.
pub fn eta_weights<M, P>(
    model: &M,
    draws: &PosteriorDraws,
    transformed: &TransformedDraws,
    data: &Dataset,
    prior: &P,
    i: usize,
) -> Result<(WeightVector, usize)>
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    let lp_theta: Vec<f64> = draws
        .values()
        .iter_rows()
        .map(|t| log_posterior_unnorm(model, t, data, prior))
        .collect();
    eta_with_cache(model, &lp_theta, transformed, data, prior, i)
}

fn eta_with_cache<M, P>(
    model: &M,
    lp_theta: &[f64],
    transformed: &TransformedDraws,
    data: &Dataset,
    prior: &P,
    i: usize,
) -> Result<(WeightVector, usize)>
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    let (x, y) = (data.x(i), data.y(i));
    let mut dropped = 0;
    let lw = transformed
        .phi
        .iter_rows()
        .enumerate()
        .map(|(k, phi)| {
            if transformed.singular[k] {
                dropped += 1;
                return f64::NEG_INFINITY;
            }
            let ratio = if transformed.degenerate {
                0.0
            } else {
                log_posterior_unnorm(model, phi, data, prior) - lp_theta[k]
            };
            let v = transformed.log_jac_det[k] - log_likelihood(model, phi, x, y) + ratio;
            if v.is_finite() {
                v
            } else {
                dropped += 1;
                f64::NEG_INFINITY
            }
        })
        .collect();
    Ok((WeightVector::from_log_weights(lw)?, dropped))
}

/// `log χ_k = log J_k − log π̂(θ_k) + log π(φ_k) + Σ_{j≠i} log ℓ(φ_k|d_j)`.
pub fn chi_weights<M, P, V>(
    model: &M,
    draws: &PosteriorDraws,
    transformed: &TransformedDraws,
    data: &Dataset,
    prior: &P,
    variational: &V,
    i: usize,
) -> Result<(WeightVector, usize)>
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
    V: VariationalDensity + ?Sized,
{
    let (x, y) = (data.x(i), data.y(i));
    let mut dropped = 0;
    let lw = transformed
        .phi
        .iter_rows()
        .enumerate()
        .map(|(k, phi)| {
            if transformed.singular[k] {
                dropped += 1;
                return f64::NEG_INFINITY;
            }
            let loo_post = log_posterior_unnorm(model, phi, data, prior) - log_likelihood(model, phi, x, y);
            let v = transformed.log_jac_det[k] - variational.log_density(draws.draw(k)) + loo_post;
            if v.is_finite() {
                v
            } else {
                dropped += 1;
                f64::NEG_INFINITY
            }
        })
        .collect();
    Ok((WeightVector::from_log_weights(lw)?, dropped))
}

/// `−2 Σ_i log Σ_k w_ik ℓ(φ_ik | d_i)`.
pub fn loo_ic(results: &[ObservationResult]) -> f64 {
    -2.0 * results.iter().map(|r| r.loo_log_predictive_density).sum::<f64>()
}

/// Engine state shared read-only by every observation.
pub struct LooEngine<'a, M: ?Sized, P: ?Sized> {
    model: &'a M,
    draws: &'a PosteriorDraws,
    data: &'a Dataset,
    prior: &'a P,
    config: RunConfig,
    cache: PosteriorCache,
    stats: MarginalStats,
    variational: Option<&'a dyn VariationalDensity>,
    hbar_grid: Vec<f64>,
}

/// Weights of one candidate proposal together with the draws they attach to.
struct Candidate {
    weights: WeightVector,
    fit: GpdFit,
    phi: Option<RowMatrix>,
}

impl<'a, M, P> LooEngine<'a, M, P>
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    pub fn new(
        model: &'a M,
        draws: &'a PosteriorDraws,
        data: &'a Dataset,
        prior: &'a P,
        config: RunConfig,
    ) -> Result<Self> {
        Self::check_shapes(model, draws, data, prior)?;
        let cache = PosteriorCache::new(model, draws, data, prior);
        Self::with_cache(model, draws, data, prior, config, cache)
    }

    /// As [`LooEngine::new`] with a precomputed posterior cache, e.g. one
    /// built in parallel.
    pub fn with_cache(
        model: &'a M,
        draws: &'a PosteriorDraws,
        data: &'a Dataset,
        prior: &'a P,
        config: RunConfig,
        cache: PosteriorCache,
    ) -> Result<Self> {
        Self::check_shapes(model, draws, data, prior)?;
        config.validate()?;
        if cache.log_post.len() != draws.num_draws() {
            return Err(Error::Dimension {
                what: "posterior cache",
                expected: draws.num_draws(),
                actual: cache.log_post.len(),
            });
        }
        let stats = marginal_stats(draws, None)?;
        let hbar_grid = config.hbar_grid();
        Ok(Self {
            model,
            draws,
            data,
            prior,
            config,
            cache,
            stats,
            variational: None,
            hbar_grid,
        })
    }

    fn check_shapes(model: &M, draws: &PosteriorDraws, data: &Dataset, prior: &P) -> Result<()> {
        let pd = model.param_dim();
        if draws.num_params() != pd {
            return Err(Error::Dimension {
                what: "draw columns (model parameters)",
                expected: pd,
                actual: draws.num_params(),
            });
        }
        if data.p() != model.input_dim() {
            return Err(Error::Dimension {
                what: "dataset features",
                expected: model.input_dim(),
                actual: data.p(),
            });
        }
        if prior.dim() != pd {
            return Err(Error::Dimension {
                what: "prior dimension",
                expected: pd,
                actual: prior.dim(),
            });
        }
        Ok(())
    }

    /// Supplies `π̂` for variational-corrected weights.
    pub fn with_variational(mut self, v: &'a dyn VariationalDensity) -> Self {
        self.variational = Some(v);
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn num_observations(&self) -> usize {
        self.data.n()
    }

    fn variational(&self) -> Result<Option<&'a dyn VariationalDensity>> {
        match (self.config.use_variational_correction, self.variational) {
            (false, _) => Ok(None),
            (true, Some(v)) => Ok(Some(v)),
            (true, None) => Err(Error::Config(
                "use_variational_correction is set but no variational density was supplied".into(),
            )),
        }
    }

    fn weights_for(&self, t: &TransformedDraws, i: usize) -> Result<(WeightVector, usize)> {
        match self.variational()? {
            Some(v) => chi_weights(self.model, self.draws, t, self.data, self.prior, v, i),
            None => eta_with_cache(self.model, &self.cache.log_post, t, self.data, self.prior, i),
        }
    }

    fn raw_weights(&self, i: usize) -> Result<WeightVector> {
        if self.variational()?.is_some() {
            let id = TransformedDraws::identity(self.draws, true);
            Ok(self.weights_for(&id, i)?.0)
        } else {
            nu_weights(self.model, self.draws, self.data, i)
        }
    }

    /// Raw smoothed `k̂` for every observation, without adaptation.
    pub fn diagnose(&self, i: usize) -> Result<GpdFit> {
        let raw = self.raw_weights(i)?;
        Ok(pareto_smooth(&raw, self.config.tail_fraction_rule).1)
    }

    fn build(&self, spec: &TransformSpec, nu_smoothed: &WeightVector) -> Result<TransformedDraws> {
        match spec.kind {
            TransformKind::Pmm1 | TransformKind::Pmm2 => apply_pmm(spec, self.draws, nu_smoothed),
            _ => apply_gradient_transform(
                spec,
                self.model,
                self.draws,
                self.data,
                self.prior,
                &self.stats,
                &self.cache,
                self.config.jacobian,
            ),
        }
    }

    pub fn adapt_observation(&self, i: usize) -> Result<ObservationResult> {
        if i >= self.data.n() {
            return Err(Error::Dimension {
                what: "observation index",
                expected: self.data.n(),
                actual: i,
            });
        }
        let threshold = self.config.khat_threshold;
        let rule = self.config.tail_fraction_rule;
        let raw = self.raw_weights(i)?;
        let (raw_smoothed, raw_fit) = pareto_smooth(&raw, rule);
        let raw_khat = raw_fit.khat;

        let mut best = Candidate {
            weights: raw_smoothed.clone(),
            fit: raw_fit,
            phi: None,
        };
        let mut best_spec = None;
        let mut attempts = Vec::new();

        if !(raw_khat <= threshold) {
            'search: for &kind in &self.config.transform_order {
                for &hbar in &self.hbar_grid {
                    let spec = TransformSpec::new(kind, hbar, i)?;
                    let mut rec = AttemptRecord {
                        spec,
                        khat: f64::INFINITY,
                        tail_status: TailStatus::Degenerate,
                        h_used: 0.0,
                        exact_jacobian: false,
                        degenerate: false,
                        unavailable: false,
                        singular_draws: 0,
                        nonfinite_draws: 0,
                        kink_crossings: 0,
                        max_step_sd: 0.0,
                    };
                    let t = match self.build(&spec, &raw_smoothed) {
                        Ok(t) => t,
                        Err(Error::Domain(_)) => {
                            // Availability does not depend on h̄.
                            rec.unavailable = true;
                            attempts.push(rec);
                            break;
                        }
                        Err(e) => return Err(e),
                    };
                    rec.h_used = t.h_used;
                    rec.exact_jacobian = t.exact_jacobian;
                    rec.degenerate = t.degenerate;
                    rec.singular_draws = t.singular_count();
                    rec.kink_crossings = t.kink_crossings;
                    rec.max_step_sd = t.max_step_sd;
                    if t.degenerate {
                        // h = 0 for every h̄: the identity reproduces the raw fit.
                        rec.khat = raw_khat;
                        rec.tail_status = raw_fit.status;
                        attempts.push(rec);
                        break;
                    }
                    let (w, dropped) = match self.weights_for(&t, i) {
                        Ok(v) => v,
                        Err(Error::Domain(_)) => {
                            rec.nonfinite_draws = self.draws.num_draws();
                            attempts.push(rec);
                            continue;
                        }
                        Err(e) => return Err(e),
                    };
                    rec.nonfinite_draws = dropped - rec.singular_draws.min(dropped);
                    let (ws, fit) = pareto_smooth(&w, rule);
                    rec.khat = fit.khat;
                    rec.tail_status = fit.status;
                    attempts.push(rec);
                    if fit.khat < best.fit.khat {
                        best = Candidate {
                            weights: ws,
                            fit,
                            phi: Some(t.phi),
                        };
                        best_spec = Some(spec);
                    }
                    if fit.khat <= threshold {
                        break 'search;
                    }
                }
            }
        }

        let final_khat = best.fit.khat;
        let phi = best.phi.as_ref().unwrap_or(self.draws.values());
        let (x, y) = (self.data.x(i), self.data.y(i));
        let mut probs = Vec::with_capacity(phi.rows());
        let mut lls = Vec::with_capacity(phi.rows());
        for row in phi.iter_rows() {
            let mu = self.model.mu(row, x);
            probs.push(sigmoid(mu));
            lls.push(log_bernoulli(mu, y));
        }
        let w = &best.weights;
        let terms: Vec<f64> = w
            .normalized()
            .iter()
            .zip(&lls)
            .map(|(wk, l)| if *wk > 0.0 { log(*wk) + l } else { f64::NEG_INFINITY })
            .collect();
        let lpd = logsumexp(&terms);
        let dens: Vec<f64> = lls.iter().map(|&l| exp(l)).collect();

        Ok(ObservationResult {
            index: i,
            raw_khat,
            raw_tail_status: raw_fit.status,
            adapted: final_khat <= threshold,
            raw_sufficient: raw_khat <= threshold,
            winning_transform: best_spec,
            final_khat,
            loo_predictive_prob: w.expectation(&probs).clamp(0.0, 1.0),
            loo_predictive_prob_se: w.mc_standard_error(&probs),
            loo_log_predictive_density: lpd,
            loo_density_se: w.mc_standard_error(&dens),
            effective_sample_size: w.effective_sample_size(),
            final_weights: best.weights,
            attempts,
        })
    }

    /// Runs every observation in index order.
    pub fn run(&self) -> Result<LooReport> {
        let results = (0..self.data.n())
            .map(|i| self.adapt_observation(i))
            .collect::<Result<Vec<_>>>()?;
        assemble_report(results, self.data)
    }
}

/// Aggregates per-observation results (already in index order) into a
/// report with LOO-IC and ROC / precision-recall summaries.
pub fn assemble_report(results: Vec<ObservationResult>, data: &Dataset) -> Result<LooReport> {
    if results.len() != data.n() {
        return Err(Error::Dimension {
            what: "observation results",
            expected: data.n(),
            actual: results.len(),
        });
    }
    if let Some((pos, r)) = results.iter().enumerate().find(|(pos, r)| r.index != *pos) {
        return Err(Error::Domain(format!("result {pos} carries index {}", r.index)));
    }
    let ic = loo_ic(&results);
    if !ic.is_finite() {
        return Err(Error::Domain(format!("LOO-IC is not finite: {ic}")));
    }
    let var: f64 = results
        .iter()
        .map(|r| {
            let rel = r.loo_density_se / exp(r.loo_log_predictive_density);
            rel * rel
        })
        .sum();
    let n_failed = results.iter().filter(|r| !r.adapted).count();
    let scores: Vec<f64> = results.iter().map(|r| r.loo_predictive_prob).collect();
    let (roc_points, prc_points, auroc_v, auprc_v) =
        match (roc_curve(&scores, data.labels()), pr_curve(&scores, data.labels())) {
            (Ok(roc), Ok(pr)) => {
                let a = auroc(&roc);
                let b = auprc(&pr);
                (roc, pr, Some(a), Some(b))
            }
            (Err(Error::CurveUndefined), _) | (_, Err(Error::CurveUndefined)) => (vec![], vec![], None, None),
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
    Ok(LooReport {
        per_observation: results,
        loo_ic: ic,
        loo_ic_se: 2.0 * sqrt(var),
        n_failed,
        roc_points,
        prc_points,
        auroc: auroc_v,
        auprc: auprc_v,
    })
}

//! Generalized Pareto tail fits, the `k̂` diagnostic, and Pareto smoothing
//! and truncation of importance weights. All weight arithmetic is in log
//! space.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp, expm1, log, log1p, logsumexp, sqrt};

/// Self-normalized importance weights, kept both as unnormalized log
/// weights and as probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    #[serde(with = "vec_f64")]
    log_weights: Vec<f64>,
    normalized: Vec<f64>,
}

impl WeightVector {
    /// Normalizes via log-sum-exp. Entries of `-∞` are zero-weight draws;
    /// at least one entry must be finite and none may be `+∞` or NaN.
    pub fn from_log_weights(log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::Domain("empty weight vector".into()));
        }
        if let Some(k) = log_weights.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Domain(format!("log weight {k} is {}", log_weights[k])));
        }
        let lse = logsumexp(&log_weights);
        if !lse.is_finite() {
            return Err(Error::Domain("every draw has zero weight".into()));
        }
        let normalized = log_weights.iter().map(|&l| exp(l - lse)).collect();
        Ok(Self {
            log_weights,
            normalized,
        })
    }

    pub fn uniform(s: usize) -> Self {
        Self {
            log_weights: vec![0.0; s],
            normalized: vec![1.0 / s as f64; s],
        }
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    /// `Σ w_k f_k`.
    pub fn expectation(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        self.normalized
            .iter()
            .zip(f)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Delta-method standard error of the self-normalized estimate
    /// `Σ w_k f_k`: `sqrt(Σ w_k² (f_k − f̂)²)`.
    pub fn mc_standard_error(&self, f: &[f64]) -> f64 {
        let mean = self.expectation(f);
        let var: f64 = self
            .normalized
            .iter()
            .zip(f)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, v)| {
                let d = w * (v - mean);
                d * d
            })
            .sum();
        sqrt(var)
    }

    /// Kish effective sample size `1 / Σ w_k²`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.normalized.iter().map(|w| w * w).sum::<f64>()
    }
}

/// How many of the largest weights form the Pareto tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TailRule {
    /// `M = ceil(min(0.2 S, 3 sqrt(S)))`.
    #[default]
    Psis,
    /// `M = ceil(f S)`.
    Fraction(f64),
}

impl TailRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TailRule::Psis => Ok(()),
            TailRule::Fraction(f) if f > 0.0 && f < 1.0 => Ok(()),
            TailRule::Fraction(f) => Err(Error::Config(format!("tail fraction must lie in (0, 1), got {f}"))),
        }
    }

    /// Tail size for `s` draws, never more than `s - 1` so a cutoff exists.
    pub fn tail_size(&self, s: usize) -> usize {
        let sf = s as f64;
        let m = match *self {
            TailRule::Psis => libm::ceil(f64::min(0.2 * sf, 3.0 * sqrt(sf))),
            TailRule::Fraction(f) => libm::ceil(f * sf),
        };
        (m as usize).min(s.saturating_sub(1))
    }
}

/// Outcome of a tail fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailStatus {
    Fitted,
    /// Fewer than the minimum number of tail points.
    TooShort,
    /// Every tail value is identical: there is no tail at all.
    Constant,
    /// The estimator produced non-finite output.
    Degenerate,
}

pub const MIN_TAIL: usize = 5;

/// Fitted generalized Pareto tail.
///
/// When not fittable, `khat` carries the value the success predicate should
/// see: `-∞` for a constant tail (perfectly flat weights are harmless) and
/// `+∞` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    #[serde(with = "crate::serde_f64")]
    pub khat: f64,
    pub sigma: f64,
    pub tail_size: usize,
    pub fittable: bool,
    pub status: TailStatus,
}

impl GpdFit {
    fn unfitted(tail_size: usize, status: TailStatus) -> Self {
        let khat = if status == TailStatus::Constant {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
        Self {
            khat,
            sigma: 0.0,
            tail_size,
            fittable: false,
            status,
        }
    }
}

const GPD_NODES: usize = 30;
const PRIOR_BS: f64 = 3.0;
const PRIOR_K: f64 = 10.0;

/// Zhang–Stephens profile-posterior estimate of the GPD `(k, σ)` for
/// excesses sorted ascending, followed by the weakly informative shrinkage of
/// `k` toward 0.5 used by PSIS.
pub fn fit_gpd_tail(sorted_excesses: &[f64]) -> GpdFit {
    let x = sorted_excesses;
    let n = x.len();
    if n < MIN_TAIL {
        return GpdFit::unfitted(n, TailStatus::TooShort);
    }
    debug_assert!(x.windows(2).all(|w| w[0] <= w[1]), "excesses must be sorted");
    let x_max = x[n - 1];
    if !(x_max > x[0]) {
        return GpdFit::unfitted(n, TailStatus::Constant);
    }
    let quartile = x[((n as f64 / 4.0 + 0.5) as usize).max(1) - 1];
    if !(quartile > 0.0) || !x_max.is_finite() {
        return GpdFit::unfitted(n, TailStatus::Degenerate);
    }

    let nf = n as f64;
    let mut b = [0.0; GPD_NODES];
    let mut len = [0.0; GPD_NODES];
    for j in 0..GPD_NODES {
        let node = 1.0 - sqrt(GPD_NODES as f64 / (j as f64 + 0.5));
        b[j] = node / (PRIOR_BS * quartile) + 1.0 / x_max;
        let k = mean_log1p(b[j], x);
        len[j] = nf * (log(-b[j] / k) - k - 1.0);
    }

    let lmax = len.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lmax.is_finite() {
        return GpdFit::unfitted(n, TailStatus::Degenerate);
    }
    let mut w = [0.0; GPD_NODES];
    let mut total = 0.0;
    for j in 0..GPD_NODES {
        w[j] = exp(len[j] - lmax);
        total += w[j];
    }
    let (mut b_post, mut kept) = (0.0, 0.0);
    for j in 0..GPD_NODES {
        let wj = w[j] / total;
        if wj >= 10.0 * f64::EPSILON {
            b_post += wj * b[j];
            kept += wj;
        }
    }
    b_post /= kept;

    let k = mean_log1p(b_post, x);
    let sigma = -k / b_post;
    let khat = (nf * k + PRIOR_K * 0.5) / (nf + PRIOR_K);
    if !khat.is_finite() || !(sigma > 0.0) || !sigma.is_finite() {
        return GpdFit::unfitted(n, TailStatus::Degenerate);
    }
    GpdFit {
        khat,
        sigma,
        tail_size: n,
        fittable: true,
        status: TailStatus::Fitted,
    }
}

fn mean_log1p(b: f64, x: &[f64]) -> f64 {
    x.iter().map(|&v| log1p(-b * v)).sum::<f64>() / x.len() as f64
}

/// GPD inverse CDF with location 0.
pub fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    let l = log1p(-p);
    if k.abs() < 1e-12 {
        -sigma * l
    } else {
        sigma * expm1(-k * l) / k
    }
}

/// Replaces the `M` largest weights by expected GPD order statistics above
/// the tail cutoff, capped at the raw maximum. Weights outside the tail keep
/// their log values bit-for-bit; raw ties inside the tail share one smoothed
/// value so ordering is preserved.
pub fn pareto_smooth(weights: &WeightVector, rule: TailRule) -> (WeightVector, GpdFit) {
    let lw = weights.log_weights();
    let s = lw.len();
    let m = rule.tail_size(s);
    if m < MIN_TAIL {
        return (weights.clone(), GpdFit::unfitted(m, TailStatus::TooShort));
    }

    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]).then(a.cmp(&b)));
    let tail = &order[s - m..];
    let cutoff_log = lw[order[s - m - 1]];
    let max_log = lw[order[s - 1]];
    if max_log == f64::NEG_INFINITY {
        return (weights.clone(), GpdFit::unfitted(m, TailStatus::Constant));
    }

    let cutoff = exp(cutoff_log - max_log);
    let excesses: Vec<f64> = tail.iter().map(|&k| (exp(lw[k] - max_log) - cutoff).max(0.0)).collect();
    let fit = fit_gpd_tail(&excesses);
    if !fit.fittable {
        return (weights.clone(), fit);
    }

    let mf = m as f64;
    let smoothed_tail: Vec<f64> = (0..m)
        .map(|r| cutoff + gpd_quantile((r as f64 + 0.5) / mf, fit.khat, fit.sigma))
        .collect();

    let mut out = lw.to_vec();
    let mut start = 0;
    while start < m {
        let raw = lw[tail[start]];
        let mut end = start + 1;
        while end < m && lw[tail[end]] == raw {
            end += 1;
        }
        if raw > cutoff_log {
            let avg = smoothed_tail[start..end].iter().sum::<f64>() / (end - start) as f64;
            let v = log(avg.min(1.0)) + max_log;
            for &k in &tail[start..end] {
                out[k] = v;
            }
        }
        start = end;
    }
    let smoothed = WeightVector::from_log_weights(out).expect("smoothing keeps the maximum finite");
    (smoothed, fit)
}

/// Caps every raw weight at `mean · sqrt(S)` and renormalizes.
pub fn truncate_weights(weights: &WeightVector) -> WeightVector {
    let lw = weights.log_weights();
    let s = lw.len() as f64;
    let max_log = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean: f64 = lw.iter().map(|&l| exp(l - max_log)).sum::<f64>() / s;
    let cap = log(mean * sqrt(s)) + max_log;
    let out = lw.iter().map(|&l| l.min(cap)).collect();
    WeightVector::from_log_weights(out).expect("truncation keeps finite weights")
}

/// Serializes log weights with `-∞` allowed.
mod vec_f64 {
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Ext(#[serde(with = "crate::serde_f64")] f64);

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|&x| Ext(x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Ext>::deserialize(d)?.into_iter().map(|e| e.0).collect())
    }
}

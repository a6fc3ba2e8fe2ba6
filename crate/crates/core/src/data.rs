//! Data models shared by every stage: the labelled dataset, the posterior
//! draws used as the importance-sampling proposal, run configuration, and
//! per-parameter marginal moments.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::math::sqrt;
use crate::matrix::RowMatrix;
use crate::psis::TailRule;
use crate::transforms::{JacobianMode, TransformKind};

/// Observed training data `{(x_i, y_i)}`. Leave-one-out folds are always
/// addressed by observation index; the dataset is never copied per fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: RowMatrix,
    labels: Vec<u8>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: RowMatrix, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::Domain("dataset needs n >= 1 and p >= 1".to_string()));
        }
        if labels.len() != features.rows() {
            return Err(Error::Dimension {
                what: "labels",
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        if feature_names.len() != features.cols() {
            return Err(Error::Dimension {
                what: "feature names",
                expected: features.cols(),
                actual: feature_names.len(),
            });
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::Domain(format!(
                "label {} at observation {i} is not 0/1",
                labels[i]
            )));
        }
        if features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite feature value".to_string()));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn p(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    #[inline]
    pub fn y(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn features(&self) -> &RowMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Prepends a constant-one column named `intercept`, which is how both
    /// model families absorb their first-layer bias.
    pub fn with_intercept(&self) -> Self {
        let (n, p) = (self.n(), self.p());
        let mut m = RowMatrix::zeros(n, p + 1);
        for i in 0..n {
            let row = m.row_mut(i);
            row[0] = 1.0;
            row[1..].copy_from_slice(self.x(i));
        }
        let mut names = Vec::with_capacity(p + 1);
        names.push("intercept".to_string());
        names.extend(self.feature_names.iter().cloned());
        Self {
            features: m,
            labels: self.labels.clone(),
            feature_names: names,
        }
    }
}

/// Posterior draws `θ_k ~ π(θ|D)`, one row per draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    values: RowMatrix,
    param_names: Vec<String>,
}

impl PosteriorDraws {
    pub fn new(values: RowMatrix, param_names: Vec<String>) -> Result<Self> {
        if values.rows() < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 posterior draws, got {}",
                values.rows()
            )));
        }
        if param_names.len() != values.cols() {
            return Err(Error::Dimension {
                what: "parameter names",
                expected: values.cols(),
                actual: param_names.len(),
            });
        }
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite draw value at draw {}, parameter {}",
                pos / values.cols(),
                pos % values.cols()
            )));
        }
        Ok(Self { values, param_names })
    }

    /// Draws with generated names `theta[0]`, `theta[1]`, ...
    pub fn unnamed(values: RowMatrix) -> Result<Self> {
        let names = (0..values.cols()).map(|j| format!("theta[{j}]")).collect();
        Self::new(values, names)
    }

    pub fn num_draws(&self) -> usize {
        self.values.rows()
    }

    pub fn num_params(&self) -> usize {
        self.values.cols()
    }

    #[inline]
    pub fn draw(&self, k: usize) -> &[f64] {
        self.values.row(k)
    }

    pub fn values(&self) -> &RowMatrix {
        &self.values
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }
}

fn default_khat_threshold() -> f64 {
    0.7
}

fn default_hbar_exponents() -> Vec<u32> {
    (0..=10).collect()
}

fn default_transform_order() -> Vec<TransformKind> {
    TransformKind::ALL.to_vec()
}

/// Run configuration. Every field has a default so a JSON document may
/// specify any subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(with = "crate::serde_f64")]
    pub khat_threshold: f64,
    /// Step-size grid `h̄ = 4^{-r}` for each exponent `r`.
    pub hbar_exponents: Vec<u32>,
    pub transform_order: Vec<TransformKind>,
    pub tail_fraction_rule: TailRule,
    pub rng_seed: u64,
    pub use_variational_correction: bool,
    /// Determinant used by the gradient transforms.
    pub jacobian: JacobianMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            khat_threshold: default_khat_threshold(),
            hbar_exponents: default_hbar_exponents(),
            transform_order: default_transform_order(),
            tail_fraction_rule: TailRule::default(),
            rng_seed: 0,
            use_variational_correction: false,
            jacobian: JacobianMode::Exact,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.khat_threshold.is_nan() || self.khat_threshold <= 0.0 {
            return Err(Error::Config(format!(
                "khat_threshold must be > 0, got {}",
                self.khat_threshold
            )));
        }
        if self.hbar_exponents.is_empty() {
            return Err(Error::Config("hbar_exponents must be non-empty".to_string()));
        }
        if self.transform_order.is_empty() {
            return Err(Error::Config("transform_order must be non-empty".to_string()));
        }
        for (a, kind) in self.transform_order.iter().enumerate() {
            if self.transform_order[..a].contains(kind) {
                return Err(Error::Config(format!("transform {kind} listed twice")));
            }
        }
        self.tail_fraction_rule.validate()
    }

    /// `h̄` values in iteration order: largest step first.
    pub fn hbar_grid(&self) -> Vec<f64> {
        let mut r = self.hbar_exponents.clone();
        r.sort_unstable();
        r.dedup();
        r.into_iter().map(|r| libm::pow(4.0, -(r as f64))).collect()
    }
}

/// Per-parameter moments of the draws: `θ̄`, `√v`, `θ̄_w`, `v`, `v_w`.
///
/// Both variances use divisor `S`, and `v_w` is taken about the unweighted
/// mean `θ̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub weighted_mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub weighted_variance: Vec<f64>,
}

pub fn marginal_stats(draws: &PosteriorDraws, weights: Option<&[f64]>) -> Result<MarginalStats> {
    let s = draws.num_draws();
    let p = draws.num_params();
    if let Some(w) = weights {
        if w.len() != s {
            return Err(Error::Dimension {
                what: "weights",
                expected: s,
                actual: w.len(),
            });
        }
        if let Some(k) = w.iter().position(|&v| !(v >= 0.0)) {
            return Err(Error::Domain(format!("weight {k} is negative or NaN: {}", w[k])));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("weights sum to {total}, expected 1")));
        }
    }

    let inv_s = 1.0 / s as f64;
    let mut mean = vec![0.0; p];
    for theta in draws.values().iter_rows() {
        for (m, t) in mean.iter_mut().zip(theta) {
            *m += t;
        }
    }
    mean.iter_mut().for_each(|m| *m *= inv_s);

    let mut variance = vec![0.0; p];
    for theta in draws.values().iter_rows() {
        for ((v, t), m) in variance.iter_mut().zip(theta).zip(&mean) {
            let d = t - m;
            *v += d * d;
        }
    }
    variance.iter_mut().for_each(|v| *v *= inv_s);

    let (weighted_mean, weighted_variance) = match weights {
        None => (mean.clone(), variance.clone()),
        Some(w) => {
            let mut wm = vec![0.0; p];
            let mut wv = vec![0.0; p];
            for (theta, &wk) in draws.values().iter_rows().zip(w) {
                if wk == 0.0 {
                    continue;
                }
                for a in 0..p {
                    let d = theta[a] - mean[a];
                    wm[a] += wk * theta[a];
                    wv[a] += wk * d * d;
                }
            }
            (wm, wv)
        }
    };

    let sd = variance.iter().map(|&v| sqrt(v)).collect();
    Ok(MarginalStats {
        mean,
        sd,
        weighted_mean,
        variance,
        weighted_variance,
    })
}

/// Unvalidated table as produced by a CSV reader: a header and string cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Builds a [`Dataset`] from raw cells, collecting every violation (ragged
/// rows, non-numeric or non-finite features, labels outside `{0,1}`)
/// rather than stopping at the first.
pub fn validate_dataset(raw: &RawTable, label_column: &str) -> Result<Dataset> {
    let mut problems = Vec::new();
    let Some(label_idx) = raw.header.iter().position(|h| h.trim() == label_column) else {
        return Err(Error::InvalidDataset(vec![Violation {
            row: None,
            column: Some(label_column.to_string()),
            message: "label column not found in header".to_string(),
        }]));
    };
    let feature_cols: Vec<usize> = (0..raw.header.len()).filter(|&j| j != label_idx).collect();
    if feature_cols.is_empty() {
        problems.push(Violation {
            row: None,
            column: None,
            message: "no feature columns".to_string(),
        });
    }
    if raw.rows.is_empty() {
        problems.push(Violation {
            row: None,
            column: None,
            message: "dataset has no rows".to_string(),
        });
    }

    let width = raw.header.len();
    let mut values = Vec::with_capacity(raw.rows.len() * feature_cols.len());
    let mut labels = Vec::with_capacity(raw.rows.len());
    for (r, row) in raw.rows.iter().enumerate() {
        let row_no = r + 1;
        if row.len() != width {
            problems.push(Violation {
                row: Some(row_no),
                column: None,
                message: format!("expected {width} cells, found {}", row.len()),
            });
            continue;
        }
        let cell = row[label_idx].trim();
        match cell.parse::<f64>() {
            Ok(0.0) => labels.push(0u8),
            Ok(1.0) => labels.push(1u8),
            _ => problems.push(Violation {
                row: Some(row_no),
                column: Some(raw.header[label_idx].clone()),
                message: format!("label '{cell}' is not 0 or 1"),
            }),
        }
        for &j in &feature_cols {
            let cell = row[j].trim();
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                Ok(_) => problems.push(Violation {
                    row: Some(row_no),
                    column: Some(raw.header[j].clone()),
                    message: format!("feature value '{cell}' is not finite"),
                }),
                Err(_) => problems.push(Violation {
                    row: Some(row_no),
                    column: Some(raw.header[j].clone()),
                    message: format!("feature value '{cell}' is not numeric"),
                }),
            }
        }
    }
    if !problems.is_empty() {
        return Err(Error::InvalidDataset(problems));
    }

    let features = RowMatrix::from_vec(raw.rows.len(), feature_cols.len(), values)?;
    let names = feature_cols.iter().map(|&j| raw.header[j].trim().to_string()).collect();
    Dataset::new(features, labels, names)
}

//! Perturbative posterior maps `T(θ) = θ + h Q(θ)`: partial moment matching
//! (PMM1, PMM2), single gradient-flow steps on the KL and variance
//! objectives, and the log-likelihood descent baseline, with their Jacobian
//! log-determinants.
//!
//! Every gradient direction factors as `Q = g(θ) ∇μ(θ)` for a scalar `g`, so
//! `∇Q = g H + ∇μ ∇gᵀ` with `H = ∇∇μ`. With the nonzero eigenpairs of `H`
//! the exact determinant is a product over the spectrum times one rank-one
//! correction, and no `P × P` matrix is ever formed.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{marginal_stats, Dataset, MarginalStats, PosteriorDraws};
use crate::error::{Error, Result};
use crate::math::{dot, exp, fabs, ln_abs, log, log_sigmoid, sigmoid};
use crate::matrix::RowMatrix;
use crate::models::{log_posterior_unnorm, log_posterior_with_grad, EigenPair, Prior, SigmoidalModel};
use crate::psis::WeightVector;

/// Determinants with absolute value below this are treated as singular.
pub const SINGULAR_TOL: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformKind {
    #[serde(rename = "PMM1")]
    Pmm1,
    #[serde(rename = "PMM2")]
    Pmm2,
    #[serde(rename = "KL")]
    Kl,
    #[serde(rename = "Var")]
    Var,
    #[serde(rename = "LL")]
    Ll,
}

impl TransformKind {
    pub const ALL: [TransformKind; 5] = [Self::Pmm1, Self::Pmm2, Self::Kl, Self::Var, Self::Ll];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pmm1 => "PMM1",
            Self::Pmm2 => "PMM2",
            Self::Kl => "KL",
            Self::Var => "Var",
            Self::Ll => "LL",
        }
    }

    pub fn is_gradient(self) -> bool {
        matches!(self, Self::Kl | Self::Var | Self::Ll)
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown transform '{s}'")))
    }
}

/// Which determinant the gradient transforms use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// Exact when the model exposes its full Hessian spectrum, else first order.
    #[default]
    Exact,
    /// Always `log|1 + h ∇·Q|`.
    FirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub hbar: f64,
    pub observation_index: usize,
}

impl TransformSpec {
    pub fn new(kind: TransformKind, hbar: f64, observation_index: usize) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::Domain(format!("hbar must be positive, got {hbar}")));
        }
        Ok(Self {
            kind,
            hbar,
            observation_index,
        })
    }
}

/// Transformed draws `φ_k = T(θ_k)` with their log-Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedDraws {
    pub phi: RowMatrix,
    /// `log|det ∇T(θ_k)|`; `0` for singular draws, which are flagged instead.
    pub log_jac_det: Vec<f64>,
    pub h_used: f64,
    pub exact_jacobian: bool,
    /// `h = 0`: the map is the identity.
    pub degenerate: bool,
    /// Draws whose Jacobian is numerically singular; they get zero weight.
    pub singular: Vec<bool>,
    /// Draws whose ReLU activation pattern at the held-out input changes.
    pub kink_crossings: usize,
    /// `max_{k,α} |φ_kα − θ_kα| / sd_α`.
    pub max_step_sd: f64,
}

impl TransformedDraws {
    pub fn identity(draws: &PosteriorDraws, exact_jacobian: bool) -> Self {
        let s = draws.num_draws();
        Self {
            phi: draws.values().clone(),
            log_jac_det: vec![0.0; s],
            h_used: 0.0,
            exact_jacobian,
            degenerate: true,
            singular: vec![false; s],
            kink_crossings: 0,
            max_step_sd: 0.0,
        }
    }

    pub fn singular_count(&self) -> usize {
        self.singular.iter().filter(|&&b| b).count()
    }
}

/// Per-draw log posterior and its gradient, shared by every transform of
/// every observation. `c_ref` is the maximum log posterior over the draws;
/// posterior-density factors are `exp(log_post − c_ref)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorCache {
    pub log_post: Vec<f64>,
    pub grad_log_post: RowMatrix,
    pub c_ref: f64,
}

impl PosteriorCache {
    pub fn new<M, P>(model: &M, draws: &PosteriorDraws, data: &Dataset, prior: &P) -> Self
    where
        M: SigmoidalModel + ?Sized,
        P: Prior + ?Sized,
    {
        let rows: Vec<(f64, Vec<f64>)> = draws
            .values()
            .iter_rows()
            .map(|t| log_posterior_with_grad(model, t, data, prior))
            .collect();
        Self::from_rows(rows)
    }

    /// Assembles a cache from per-draw `(log posterior, gradient)` pairs in
    /// draw order.
    pub fn from_rows(rows: Vec<(f64, Vec<f64>)>) -> Self {
        let s = rows.len();
        let p = rows.first().map_or(0, |r| r.1.len());
        let mut log_post = Vec::with_capacity(s);
        let mut grad = RowMatrix::zeros(s, p);
        for (k, (lp, g)) in rows.into_iter().enumerate() {
            log_post.push(lp);
            grad.row_mut(k).copy_from_slice(&g);
        }
        let c_ref = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            log_post,
            grad_log_post: grad,
            c_ref,
        }
    }
}

/// `Q = sign · exp(log_abs_g) · ∇μ`.
#[derive(Debug, Clone, Copy)]
struct Coefficient {
    log_abs_g: f64,
    sign: f64,
}

/// Scalar factor of the gradient direction. `log_pi` is the shifted log
/// posterior `log π(θ|D) − c_ref` (unused by LL).
fn coefficient(kind: TransformKind, mu: f64, y: u8, log_pi: f64) -> Coefficient {
    match kind {
        TransformKind::Kl | TransformKind::Var => {
            let c = if kind == TransformKind::Var { 2.0 } else { 1.0 };
            let m = 1.0 - 2.0 * y as f64;
            Coefficient {
                log_abs_g: log_pi + c * m * mu,
                sign: if y == 1 { -1.0 } else { 1.0 },
            }
        }
        TransformKind::Ll => {
            // Q = -(y - σ) ∇μ; |y - σ| = σ(-μ) for y = 1 and σ(μ) for y = 0.
            let (log_abs_g, sign) = if y == 1 {
                (log_sigmoid(-mu), -1.0)
            } else {
                (log_sigmoid(mu), 1.0)
            };
            Coefficient { log_abs_g, sign }
        }
        TransformKind::Pmm1 | TransformKind::Pmm2 => unreachable!("not a gradient transform"),
    }
}

fn direction_vector<M, P>(
    kind: TransformKind,
    model: &M,
    theta: &[f64],
    data: &Dataset,
    prior: &P,
    i: usize,
    c_ref: f64,
) -> Vec<f64>
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    let mut q = vec![0.0; model.param_dim()];
    let mu = model.grad_mu(theta, data.x(i), &mut q);
    let log_pi = if kind == TransformKind::Ll {
        0.0
    } else {
        log_posterior_unnorm(model, theta, data, prior) - c_ref
    };
    let c = coefficient(kind, mu, data.y(i), log_pi);
    let g = c.sign * exp(c.log_abs_g);
    q.iter_mut().for_each(|v| *v *= g);
    q
}

/// `Q_KL = (−1)^y π(θ|D) e^{μ(1−2y)} ∇μ`, with `π(θ|D) = exp(log π − c_ref)`.
pub fn q_kl<M, P>(model: &M, theta: &[f64], data: &Dataset, prior: &P, i: usize, c_ref: f64) -> Vec<f64>
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    direction_vector(TransformKind::Kl, model, theta, data, prior, i, c_ref)
}

/// `Q_Var = (−1)^y π(θ|D) e^{2μ(1−2y)} ∇μ`.
pub fn q_var<M, P>(model: &M, theta: &[f64], data: &Dataset, prior: &P, i: usize, c_ref: f64) -> Vec<f64>
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    direction_vector(TransformKind::Var, model, theta, data, prior, i, c_ref)
}

/// `Q_LL = −∇ log ℓ(θ | d_i)`.
pub fn q_ll<M: SigmoidalModel + ?Sized>(model: &M, theta: &[f64], data: &Dataset, i: usize) -> Vec<f64> {
    let mut q = vec![0.0; model.param_dim()];
    let mu = model.grad_mu(theta, data.x(i), &mut q);
    let g = sigmoid(mu) - data.y(i) as f64;
    q.iter_mut().for_each(|v| *v *= g);
    q
}

/// `h = h̄ · min_{k,α} |sd_α / Q_kα|` over nonzero `Q_kα`. Returns `0` when
/// every entry is zero or some `sd_α = 0` meets a nonzero `Q_α`.
pub fn step_size(q_values: &RowMatrix, stats: &MarginalStats, hbar: f64) -> f64 {
    let mut best = f64::INFINITY;
    for q in q_values.iter_rows() {
        for (qa, sd) in q.iter().zip(&stats.sd) {
            if *qa != 0.0 {
                best = best.min(fabs(sd / qa));
            }
        }
    }
    if best.is_finite() {
        hbar * best
    } else {
        0.0
    }
}

/// `log|1 + h · div_q|`, or `None` when the factor is numerically zero.
pub fn first_order_logdet(div_q: f64, h: f64) -> Option<f64> {
    nonsingular_ln(1.0 + h * div_q)
}

fn nonsingular_ln(v: f64) -> Option<f64> {
    if fabs(v) < SINGULAR_TOL || !v.is_finite() {
        None
    } else {
        Some(ln_abs(v))
    }
}

/// Jacobian `I + α H + β ∇μ wᵀ` of one gradient step at one draw.
struct StepJacobian<'a> {
    alpha: f64,
    beta: f64,
    grad_mu: &'a [f64],
    w: &'a [f64],
}

impl StepJacobian<'_> {
    /// `Σ log|1 + αλ_j| + log|1 + β ∇μᵀ(I + αH)⁻¹ w|`, with the inverse
    /// applied in the eigenbasis; directions outside it pass through.
    fn exact(&self, spectrum: &[EigenPair]) -> Option<f64> {
        let mut ld = 0.0;
        let mut quad = dot(self.grad_mu, self.w);
        for e in spectrum {
            let f = 1.0 + self.alpha * e.value;
            ld += nonsingular_ln(f)?;
            quad += dot(self.grad_mu, &e.vector) * dot(&e.vector, self.w) * (1.0 / f - 1.0);
        }
        Some(ld + nonsingular_ln(1.0 + self.beta * quad)?)
    }

    /// `log|1 + tr(α H + β ∇μ wᵀ)|`.
    fn first_order(&self, spectrum: &[EigenPair]) -> Option<f64> {
        let trace_h: f64 = spectrum.iter().map(|e| e.value).sum();
        nonsingular_ln(1.0 + self.alpha * trace_h + self.beta * dot(self.grad_mu, self.w))
    }
}

/// Per-draw inputs to the Jacobian: `(α, β, w)` from `h`, the draw's
/// coefficient, and its posterior gradient.
fn jacobian_terms(
    kind: TransformKind,
    log_h: f64,
    coef: Coefficient,
    mu: f64,
    y: u8,
    grad_mu: &[f64],
    grad_log_post: &[f64],
    w: &mut Vec<f64>,
) -> (f64, f64) {
    let alpha = if coef.log_abs_g == f64::NEG_INFINITY {
        0.0
    } else {
        coef.sign * exp(log_h + coef.log_abs_g)
    };
    w.clear();
    match kind {
        TransformKind::Ll => {
            w.extend_from_slice(grad_mu);
            let log_var = log_sigmoid(mu) + log_sigmoid(-mu);
            (alpha, exp(log_h + log_var))
        }
        _ => {
            let c = if kind == TransformKind::Var { 2.0 } else { 1.0 };
            let cm = c * (1.0 - 2.0 * y as f64);
            w.extend(grad_log_post.iter().zip(grad_mu).map(|(g, d)| g + cm * d));
            (alpha, alpha)
        }
    }
}

/// Applies a KL, Var or LL step to every draw for observation
/// `spec.observation_index`.
#[allow(clippy::too_many_arguments)]
pub fn apply_gradient_transform<M, P>(
    spec: &TransformSpec,
    model: &M,
    draws: &PosteriorDraws,
    data: &Dataset,
    _prior: &P,
    stats: &MarginalStats,
    cache: &PosteriorCache,
    mode: JacobianMode,
) -> Result<TransformedDraws>
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    if !spec.kind.is_gradient() {
        return Err(Error::Domain(format!("{} is not a gradient transform", spec.kind)));
    }
    let i = spec.observation_index;
    if i >= data.n() {
        return Err(Error::Dimension {
            what: "observation index",
            expected: data.n(),
            actual: i,
        });
    }
    let (s, p) = (draws.num_draws(), draws.num_params());
    let (x, y) = (data.x(i), data.y(i));
    let exact = mode == JacobianMode::Exact && model.exact_spectrum();

    let mut grads = RowMatrix::zeros(s, p);
    let mut mus = Vec::with_capacity(s);
    let mut coefs = Vec::with_capacity(s);
    for k in 0..s {
        let mu = model.grad_mu(draws.draw(k), x, grads.row_mut(k));
        let mut c = coefficient(spec.kind, mu, y, cache.log_post[k] - cache.c_ref);
        if grads.row(k).iter().all(|&v| v == 0.0) {
            c.log_abs_g = f64::NEG_INFINITY;
        }
        mus.push(mu);
        coefs.push(c);
    }

    // h̄ · min |sd / Q| in log space: Q itself may overflow.
    let mut log_ratio = f64::INFINITY;
    for k in 0..s {
        let lg = coefs[k].log_abs_g;
        if lg == f64::NEG_INFINITY {
            continue;
        }
        for (d, sd) in grads.row(k).iter().zip(&stats.sd) {
            if *d != 0.0 {
                log_ratio = log_ratio.min(log(*sd) - lg - ln_abs(*d));
            }
        }
    }
    if !log_ratio.is_finite() {
        return Ok(TransformedDraws::identity(draws, exact));
    }
    let log_h = log(spec.hbar) + log_ratio;

    let mut phi = draws.values().clone();
    let mut log_jac_det = vec![0.0; s];
    let mut singular = vec![false; s];
    let mut kink_crossings = 0;
    let mut max_step_sd: f64 = 0.0;
    let mut w = Vec::with_capacity(p);
    for k in 0..s {
        let theta = draws.draw(k);
        let gm = grads.row(k);
        let (alpha, beta) = jacobian_terms(
            spec.kind,
            log_h,
            coefs[k],
            mus[k],
            y,
            gm,
            cache.grad_log_post.row(k),
            &mut w,
        );
        let row = phi.row_mut(k);
        for a in 0..p {
            row[a] += alpha * gm[a];
            let moved = fabs(row[a] - theta[a]);
            if moved > 0.0 {
                max_step_sd = max_step_sd.max(moved / stats.sd[a]);
            }
        }

        let spectrum = model.hessian_spectrum(theta, x);
        let jac = StepJacobian {
            alpha,
            beta,
            grad_mu: gm,
            w: &w,
        };
        let ld = if exact {
            jac.exact(&spectrum)
        } else {
            jac.first_order(&spectrum)
        };
        match ld {
            Some(v) => log_jac_det[k] = v,
            None => singular[k] = true,
        }
        if model.activation_pattern(theta, x) != model.activation_pattern(phi.row(k), x) {
            kink_crossings += 1;
        }
    }

    Ok(TransformedDraws {
        phi,
        log_jac_det,
        h_used: exp(log_h),
        exact_jacobian: exact,
        degenerate: false,
        singular,
        kink_crossings,
        max_step_sd,
    })
}

/// Partial moment matching toward the `ν`-weighted mean (PMM1) or mean and
/// marginal variance (PMM2), damped by `h̄`.
pub fn apply_pmm(spec: &TransformSpec, draws: &PosteriorDraws, nu: &WeightVector) -> Result<TransformedDraws> {
    let stats = marginal_stats(draws, Some(nu.normalized()))?;
    let (s, p) = (draws.num_draws(), draws.num_params());
    let hb = spec.hbar;
    let shift: Vec<f64> = stats
        .weighted_mean
        .iter()
        .zip(&stats.mean)
        .map(|(w, m)| w - m)
        .collect();

    let (scale, log_det) = match spec.kind {
        TransformKind::Pmm1 => (None, 0.0),
        TransformKind::Pmm2 => {
            if let Some(a) = stats.variance.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::Domain(format!(
                    "PMM2 unavailable: parameter {a} has zero variance"
                )));
            }
            let r: Vec<f64> = stats
                .weighted_variance
                .iter()
                .zip(&stats.variance)
                .map(|(vw, v)| libm::sqrt(vw / v))
                .collect();
            let ld = r.iter().map(|ra| ln_abs(1.0 + hb * (ra - 1.0))).sum();
            (Some(r), ld)
        }
        other => return Err(Error::Domain(format!("{other} is not a moment-matching transform"))),
    };

    let mut phi = draws.values().clone();
    let mut max_step_sd: f64 = 0.0;
    for k in 0..s {
        let theta = draws.draw(k);
        let row = phi.row_mut(k);
        for a in 0..p {
            row[a] = match &scale {
                None => theta[a] + hb * shift[a],
                Some(r) => {
                    let target = r[a] * (theta[a] - stats.mean[a]) + stats.weighted_mean[a];
                    theta[a] + hb * (target - theta[a])
                }
            };
            let moved = fabs(row[a] - theta[a]);
            if moved > 0.0 {
                max_step_sd = max_step_sd.max(moved / stats.sd[a]);
            }
        }
    }
    let singular = !log_det.is_finite();
    Ok(TransformedDraws {
        phi,
        log_jac_det: vec![if singular { 0.0 } else { log_det }; s],
        h_used: hb,
        exact_jacobian: true,
        degenerate: false,
        singular: vec![singular; s],
        kink_crossings: 0,
        max_step_sd,
    })
}

fn spec_terms<M, P>(
    kind: TransformKind,
    model: &M,
    theta: &[f64],
    data: &Dataset,
    prior: &P,
    i: usize,
    h: f64,
    c_ref: f64,
    run: impl FnOnce(&StepJacobian<'_>, &[EigenPair]) -> Option<f64>,
) -> Option<f64>
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    if h == 0.0 {
        return Some(0.0);
    }
    let (lp, glp) = log_posterior_with_grad(model, theta, data, prior);
    let mut gm = vec![0.0; model.param_dim()];
    let x = data.x(i);
    let mu = model.grad_mu(theta, x, &mut gm);
    let coef = coefficient(kind, mu, data.y(i), lp - c_ref);
    let mut w = Vec::new();
    let (alpha, beta) = jacobian_terms(kind, log(h), coef, mu, data.y(i), &gm, &glp, &mut w);
    let spectrum = model.hessian_spectrum(theta, x);
    run(
        &StepJacobian {
            alpha,
            beta,
            grad_mu: &gm,
            w: &w,
        },
        &spectrum,
    )
}

/// Exact log-determinant of `θ ↦ θ + h Q(θ)` for a gradient transform,
/// with posterior factors scaled by `c_ref`. `None` when singular.
#[allow(clippy::too_many_arguments)]
pub fn exact_logdet<M, P>(
    kind: TransformKind,
    model: &M,
    theta: &[f64],
    data: &Dataset,
    prior: &P,
    i: usize,
    h: f64,
    c_ref: f64,
) -> Option<f64>
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    spec_terms(kind, model, theta, data, prior, i, h, c_ref, |j, sp| j.exact(sp))
}

/// Logistic regression: `H = 0`, so the determinant is the single factor
/// `1 + h g xᵀ w`.
#[allow(clippy::too_many_arguments)]
pub fn exact_logdet_logistic<P: Prior + ?Sized>(
    kind: TransformKind,
    model: &crate::models::LogisticRegression,
    theta: &[f64],
    data: &Dataset,
    prior: &P,
    i: usize,
    h: f64,
    c_ref: f64,
) -> Option<f64> {
    exact_logdet(kind, model, theta, data, prior, i, h, c_ref)
}

/// ReLU-1: product over the `2d` eigenvalues `±|x|` of active units times
/// the rank-one correction.
#[allow(clippy::too_many_arguments)]
pub fn exact_logdet_relu1<P: Prior + ?Sized>(
    kind: TransformKind,
    model: &crate::models::ReluOneHidden,
    theta: &[f64],
    data: &Dataset,
    prior: &P,
    i: usize,
    h: f64,
    c_ref: f64,
) -> Option<f64> {
    exact_logdet(kind, model, theta, data, prior, i, h, c_ref)
}

/// `∇·Q` at `θ`, scaled consistently with [`q_kl`] and friends, for use with
/// [`first_order_logdet`].
pub fn divergence_q<M, P>(
    kind: TransformKind,
    model: &M,
    theta: &[f64],
    data: &Dataset,
    prior: &P,
    i: usize,
    c_ref: f64,
) -> f64
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    let mut div = 0.0;
    spec_terms(kind, model, theta, data, prior, i, 1.0, c_ref, |j, sp| {
        let trace_h: f64 = sp.iter().map(|e| e.value).sum();
        div = j.alpha * trace_h + j.beta * dot(j.grad_mu, j.w);
        Some(0.0)
    });
    div
}

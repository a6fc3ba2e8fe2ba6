//! Adaptive importance sampling for Bayesian leave-one-out cross-validation.
//!
//! Given posterior draws of a sigmoidal binary classifier, this crate
//! computes per-observation leave-one-out (LOO) expectations by importance
//! sampling with `1/ℓ` weights, diagnoses unreliable weights with the
//! Pareto tail shape `k̂`, and when `k̂` is too large tries a sequence of small
//! perturbative transformations `T(θ) = θ + h Q(θ)` of the draws:
//!
//! - partial moment matching (`PMM1`, `PMM2`),
//! - single gradient-flow steps descending the KL divergence (`KL`) or the
//!   estimator variance (`Var`),
//! - a log-likelihood descent baseline (`LL`).
//!
//! Jacobian determinants are exact for logistic regression and one-hidden-layer
//! ReLU networks, and first-order (`|1 + h ∇·Q|`) otherwise.
//!
//! The crate is `no_std` + `alloc`. File formats, the CLI, and the parallel
//! driver live in the `loo-adapt` companion crate.
#![cfg_attr(not(test), no_std)]
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

extern crate alloc;

pub mod data;
pub mod engine;
pub mod error;
pub mod math;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod oracle;
pub mod psis;
pub mod serde_f64;
pub mod transforms;

pub use data::{marginal_stats, validate_dataset, Dataset, MarginalStats, PosteriorDraws, RawTable, RunConfig};
pub use engine::{AttemptRecord, LooEngine, LooReport, MeanFieldGaussian, ObservationResult, VariationalDensity};
pub use error::{Error, Result, Violation};
pub use matrix::RowMatrix;
pub use metrics::CurvePoint;
pub use models::{GaussianPrior, LogisticRegression, Prior, ReluOneHidden, SigmoidalModel};
pub use psis::{GpdFit, TailRule, TailStatus, WeightVector};
pub use transforms::{JacobianMode, TransformKind, TransformSpec, TransformedDraws};

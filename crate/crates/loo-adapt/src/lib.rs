//! File formats, report envelope, parallel driver and synthetic problem
//! generator for [`loo_adapt_core`], plus the `loo-adapt` command line.
//!
//! Inputs are CSV (dataset, posterior draws, per-parameter prior and
//! variational scales) and JSON (run configuration); the output is a JSON
//! [`ReportEnvelope`] that records content hashes of the exact input bytes.

pub mod cli;
pub mod envelope;
pub mod error;
pub mod io;
pub mod parallel;
pub mod synthetic;

pub use envelope::{fingerprint, ReportEnvelope};
pub use error::{Error, Result};
pub use parallel::{run_parallel, worker_pool};
pub use synthetic::{unit_scale_prior_sd, SyntheticProblem, SyntheticSpec};

pub use loo_adapt_core as core;

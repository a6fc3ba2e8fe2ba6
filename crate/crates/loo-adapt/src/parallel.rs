//! Observation-parallel driver. Results are collected in index order, so
//! the report does not depend on the worker count.

use std::collections::BTreeMap;
use std::time::Instant;

use loo_adapt_core::models::log_posterior_with_grad;
use loo_adapt_core::transforms::PosteriorCache;
use loo_adapt_core::{
    engine::assemble_report, Dataset, GpdFit, LooEngine, LooReport, PosteriorDraws, Prior, RunConfig, SigmoidalModel,
    VariationalDensity,
};
use rayon::prelude::*;

use crate::error::Result;

/// Environment fallback for the worker count.
pub const WORKERS_ENV: &str = "LOO_ADAPT_WORKERS";

/// A pool with `workers` threads, or rayon's default (one per core) when
/// `None` or zero.
pub fn worker_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers.filter(|&w| w > 0) {
        b = b.num_threads(w);
    }
    Ok(b.build()?)
}

pub struct ParallelRun {
    pub report: LooReport,
    pub timings: BTreeMap<String, u64>,
}

fn elapsed_ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

fn engine<'a, M, P>(
    model: &'a M,
    draws: &'a PosteriorDraws,
    data: &'a Dataset,
    prior: &'a P,
    config: RunConfig,
    variational: Option<&'a dyn VariationalDensity>,
) -> Result<LooEngine<'a, M, P>>
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    let rows: Vec<(f64, Vec<f64>)> = draws
        .values()
        .as_slice()
        .par_chunks(draws.num_params().max(1))
        .map(|t| log_posterior_with_grad(model, t, data, prior))
        .collect();
    let e = LooEngine::with_cache(model, draws, data, prior, config, PosteriorCache::from_rows(rows))?;
    Ok(match variational {
        Some(v) => e.with_variational(v),
        None => e,
    })
}

/// Adapts every observation on `pool` and assembles the report.
pub fn run_parallel<M, P>(
    model: &M,
    draws: &PosteriorDraws,
    data: &Dataset,
    prior: &P,
    config: RunConfig,
    variational: Option<&dyn VariationalDensity>,
    pool: &rayon::ThreadPool,
) -> Result<ParallelRun>
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    pool.install(|| {
        let mut timings = BTreeMap::new();
        let t = Instant::now();
        let e = engine(model, draws, data, prior, config, variational)?;
        timings.insert("posterior_cache".to_string(), elapsed_ms(t));

        let t = Instant::now();
        let results = (0..data.n())
            .into_par_iter()
            .map(|i| e.adapt_observation(i))
            .collect::<loo_adapt_core::Result<Vec<_>>>()?;
        timings.insert("adaptation".to_string(), elapsed_ms(t));

        let t = Instant::now();
        let report = assemble_report(results, data)?;
        timings.insert("report".to_string(), elapsed_ms(t));
        Ok(ParallelRun { report, timings })
    })
}

/// Raw `k̂` fit for every observation, in index order.
pub fn diagnose_parallel<M, P>(
    model: &M,
    draws: &PosteriorDraws,
    data: &Dataset,
    prior: &P,
    config: RunConfig,
    variational: Option<&dyn VariationalDensity>,
    pool: &rayon::ThreadPool,
) -> Result<Vec<GpdFit>>
where
    M: SigmoidalModel + ?Sized,
    P: Prior + ?Sized,
{
    pool.install(|| {
        let e = engine(model, draws, data, prior, config, variational)?;
        Ok((0..data.n())
            .into_par_iter()
            .map(|i| e.diagnose(i))
            .collect::<loo_adapt_core::Result<Vec<_>>>()?)
    })
}

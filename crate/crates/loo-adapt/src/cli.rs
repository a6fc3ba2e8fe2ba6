//! `loo-adapt` command line.
//!
//! Exit codes: 0 success, 1 input or usage error, 3 report written but some
//! observations could not be adapted below the `k̂` threshold.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use loo_adapt_core::{
    Dataset, GaussianPrior, LogisticRegression, MeanFieldGaussian, PosteriorDraws, ReluOneHidden, RunConfig,
    SigmoidalModel,
};

use crate::envelope::ReportEnvelope;
use crate::io;
use crate::parallel::{diagnose_parallel, run_parallel, worker_pool, WORKERS_ENV};
use crate::synthetic::{unit_scale_prior_sd, SyntheticSpec};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_UNADAPTED: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "loo-adapt",
    version,
    about = "Adaptive importance-sampling LOO for Bayesian sigmoidal classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Adapt every observation and write a JSON report.
    Run(RunArgs),
    /// Print raw k̂ per observation as CSV, without adaptation.
    Diagnose(InputArgs),
    /// Write roc.csv and prc.csv from a report.
    Curves(CurvesArgs),
    /// Write a seeded synthetic logistic problem (data, draws, prior scales).
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Logistic,
    Relu1,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Dataset CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Posterior draws CSV, one row per draw.
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Hidden units for `relu1`.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Name of the label column in the dataset.
    #[arg(long, default_value = "y")]
    pub label_column: String,
    /// Prepend a constant feature named `intercept`.
    #[arg(long)]
    pub intercept: bool,
    /// Isotropic Gaussian prior scale.
    #[arg(long, conflicts_with = "prior_sd_file")]
    pub prior_sd: Option<f64>,
    /// Per-parameter Gaussian prior scales (`sd` column, optional `param`).
    #[arg(long)]
    pub prior_sd_file: Option<PathBuf>,
    /// Run configuration JSON; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Mean-field Gaussian approximation (`mean`,`sd` columns), used when
    /// the configuration enables the variational correction.
    #[arg(long)]
    pub variational: Option<PathBuf>,
    /// Worker threads; defaults to one per core.
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Report path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// Report written by `run`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub p: usize,
    #[arg(long, default_value_t = 5)]
    pub informative: usize,
    #[arg(long, default_value_t = 1.0)]
    pub signal: f64,
    /// Isotropic prior sd; defaults to `1/√p`.
    #[arg(long)]
    pub prior_sd: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    pub num_draws: usize,
    /// Proposal sd relative to the Laplace approximation.
    #[arg(long, default_value_t = 2.0)]
    pub inflation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { EXIT_OK });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Diagnose(a) => cmd_diagnose(&a, &mut std::io::stdout().lock()),
        Command::Curves(a) => cmd_curves(&a),
        Command::Simulate(a) => cmd_simulate(&a),
    }
}

struct Inputs {
    model: Box<dyn SigmoidalModel>,
    data: Dataset,
    draws: PosteriorDraws,
    prior: GaussianPrior,
    config: RunConfig,
    variational: Option<MeanFieldGaussian>,
    dataset_fingerprint: String,
    draws_fingerprint: String,
}

fn build_model(kind: ModelKind, hidden: Option<usize>, p: usize) -> anyhow::Result<Box<dyn SigmoidalModel>> {
    Ok(match kind {
        ModelKind::Logistic => {
            if hidden.is_some() {
                bail!("--hidden applies only to --model relu1");
            }
            Box::new(LogisticRegression::new(p))
        }
        ModelKind::Relu1 => {
            let d = hidden.context("--model relu1 requires --hidden <d>")?;
            if d == 0 {
                bail!("--hidden must be at least 1");
            }
            Box::new(ReluOneHidden::new(d, p))
        }
    })
}

fn load_inputs(a: &InputArgs) -> anyhow::Result<Inputs> {
    let config = match &a.config {
        Some(p) => io::load_config(p)?,
        None => RunConfig::default(),
    };
    let loaded = io::load_dataset(&a.data, &a.label_column)?;
    let data = if a.intercept {
        loaded.value.with_intercept()
    } else {
        loaded.value
    };
    let model = build_model(a.model, a.hidden, data.p())?;
    let draws = io::load_draws(&a.draws)?;
    let pd = model.param_dim();
    if draws.value.num_params() != pd {
        bail!(
            "{}: draws have {} columns but model {} with {} input feature(s) has P = {pd} parameters",
            a.draws.display(),
            draws.value.num_params(),
            model.name(),
            data.p(),
        );
    }
    let names = draws.value.param_names().to_vec();
    let prior = match (&a.prior_sd_file, a.prior_sd) {
        (Some(f), _) => io::load_prior_sd(f, &names)?,
        (None, Some(s)) => GaussianPrior::isotropic(pd, s)?,
        (None, None) => GaussianPrior::isotropic(pd, 1.0)?,
    };
    let variational = match &a.variational {
        Some(f) => Some(io::load_variational(f, &names)?),
        None => None,
    };
    if config.use_variational_correction && variational.is_none() {
        bail!("use_variational_correction is set; supply --variational <csv>");
    }
    if !config.use_variational_correction && variational.is_some() {
        eprintln!("warning: --variational ignored because use_variational_correction is off");
    }
    Ok(Inputs {
        model,
        data,
        draws: draws.value,
        prior,
        config,
        variational,
        dataset_fingerprint: loaded.fingerprint,
        draws_fingerprint: draws.fingerprint,
    })
}

fn variational_ref(inp: &Inputs) -> Option<&dyn loo_adapt_core::VariationalDensity> {
    if inp.config.use_variational_correction {
        inp.variational
            .as_ref()
            .map(|v| v as &dyn loo_adapt_core::VariationalDensity)
    } else {
        None
    }
}

pub fn cmd_run(a: &RunArgs) -> anyhow::Result<u8> {
    let t = Instant::now();
    let inp = load_inputs(&a.input)?;
    let load_ms = t.elapsed().as_millis() as u64;
    let pool = worker_pool(a.input.workers)?;
    let run = run_parallel(
        inp.model.as_ref(),
        &inp.draws,
        &inp.data,
        &inp.prior,
        inp.config.clone(),
        variational_ref(&inp),
        &pool,
    )?;
    let mut env = ReportEnvelope::new(
        inp.config.clone(),
        inp.dataset_fingerprint,
        inp.draws_fingerprint,
        run.report,
    );
    env.timings = run.timings;
    env.timings.insert("load_inputs".to_string(), load_ms);
    io::write_json(&a.out, &env)?;

    let r = &env.report;
    eprintln!(
        "{} observations, {} not adapted, LOO-IC {:.4} (se {:.4}); report: {}",
        r.per_observation.len(),
        r.n_failed,
        r.loo_ic,
        r.loo_ic_se,
        a.out.display()
    );
    Ok(if r.n_failed > 0 { EXIT_UNADAPTED } else { EXIT_OK })
}

pub fn cmd_diagnose(a: &InputArgs, out: &mut dyn Write) -> anyhow::Result<u8> {
    let inp = load_inputs(a)?;
    let pool = worker_pool(a.workers)?;
    let fits = diagnose_parallel(
        inp.model.as_ref(),
        &inp.draws,
        &inp.data,
        &inp.prior,
        inp.config.clone(),
        variational_ref(&inp),
        &pool,
    )?;
    let threshold = inp.config.khat_threshold;
    writeln!(out, "observation_index,raw_khat,needs_adaptation")?;
    for (i, f) in fits.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{}",
            format_khat(f.khat),
            f.khat > threshold || f.khat.is_nan()
        )?;
    }
    Ok(EXIT_OK)
}

fn format_khat(k: f64) -> String {
    match k {
        f64::INFINITY => "inf".to_string(),
        f64::NEG_INFINITY => "-inf".to_string(),
        _ => io::format_f64(k),
    }
}

pub fn cmd_curves(a: &CurvesArgs) -> anyhow::Result<u8> {
    let bytes = io::read_bytes(&a.report)?;
    let env: ReportEnvelope =
        serde_json::from_slice(&bytes).with_context(|| format!("{}: not a valid report", a.report.display()))?;
    let r = &env.report;
    if r.roc_points.is_empty() || r.prc_points.is_empty() {
        eprintln!("warning: labels contain a single class; ROC and precision-recall curves are undefined");
        return Ok(EXIT_OK);
    }
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    write_curve(&a.out_dir.join("roc.csv"), &r.roc_points)?;
    write_curve(&a.out_dir.join("prc.csv"), &r.prc_points)?;
    Ok(EXIT_OK)
}

fn write_curve(path: &Path, pts: &[loo_adapt_core::CurvePoint]) -> anyhow::Result<()> {
    let header = ["threshold", "x", "y"].map(String::from);
    let rows = pts
        .iter()
        .map(|p| vec![format_khat(p.threshold), io::format_f64(p.x), io::format_f64(p.y)]);
    io::write_csv(path, &header, rows)?;
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs) -> anyhow::Result<u8> {
    let spec = SyntheticSpec {
        n: a.n,
        p: a.p,
        informative: a.informative,
        signal: a.signal,
        prior_sd: a.prior_sd.unwrap_or_else(|| unit_scale_prior_sd(a.p)),
        num_draws: a.num_draws,
        proposal_inflation: a.inflation,
        seed: a.seed,
    };
    let prob = spec.generate()?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    io::write_dataset(&a.out_dir.join("data.csv"), &prob.data, "y")?;
    io::write_draws(&a.out_dir.join("draws.csv"), &prob.draws)?;
    io::write_prior_sd(
        &a.out_dir.join("prior_sd.csv"),
        prob.draws.param_names(),
        prob.prior.sd(),
    )?;
    eprintln!(
        "wrote data.csv ({}×{}), draws.csv ({} draws), prior_sd.csv to {}",
        a.n,
        a.p,
        a.num_draws,
        a.out_dir.display()
    );
    Ok(EXIT_OK)
}

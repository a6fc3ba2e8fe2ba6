//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL ...` line. Lines go straight to the stderr
//! handle so they show up whether or not output is captured.

#![allow(clippy::needless_range_loop)]

use std::io::Write;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use loo_adapt::io;
use loo_adapt::parallel::{run_parallel, worker_pool};
use loo_adapt::SyntheticSpec;
use loo_adapt_core::engine::{eta_weights, nu_weights};
use loo_adapt_core::math::{log_bernoulli, sigmoid};
use loo_adapt_core::metrics::{auroc, pair_count_auroc, roc_curve};
use loo_adapt_core::models::{grad_log_likelihood, grad_log_posterior, log_likelihood, log_posterior_unnorm};
use loo_adapt_core::oracle::{build_grid_posterior, exact_loo_expectation, finite_difference_jacobian, log_abs_det};
use loo_adapt_core::psis::fit_gpd_tail;
use loo_adapt_core::transforms::{
    apply_gradient_transform, divergence_q, exact_logdet, first_order_logdet, q_kl, q_ll, q_var, step_size,
    PosteriorCache,
};
use loo_adapt_core::{
    marginal_stats, Dataset, GaussianPrior, JacobianMode, LogisticRegression, LooEngine, LooReport, PosteriorDraws,
    ReluOneHidden, RowMatrix, RunConfig, SigmoidalModel, TransformKind, TransformSpec, TransformedDraws,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, pass: bool, detail: &str) {
    let line = format!("criterion {n:>2}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_dataset(r: &mut ChaCha8Rng, n: usize, p: usize, scale: f64) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| r.random_range(-scale..scale)).collect())
        .collect();
    let mut y: Vec<u8> = (0..n).map(|_| r.random_range(0..2)).collect();
    y[0] = 0;
    if n > 1 {
        y[1] = 1;
    }
    let names = (0..p).map(|j| format!("x{j}")).collect();
    Dataset::new(RowMatrix::from_rows(&rows).unwrap(), y, names).unwrap()
}

fn random_draws(r: &mut ChaCha8Rng, s: usize, dim: usize, scale: f64) -> PosteriorDraws {
    let rows: Vec<Vec<f64>> = (0..s)
        .map(|_| (0..dim).map(|_| r.random_range(-scale..scale)).collect())
        .collect();
    PosteriorDraws::unnamed(RowMatrix::from_rows(&rows).unwrap()).unwrap()
}

/// Central differences of a scalar function with step `h·max(1,|θ_a|)`.
fn fd_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|a| {
            let step = h * theta[a].abs().max(1.0);
            t[a] = theta[a] + step;
            let up = f(&t);
            t[a] = theta[a] - step;
            let dn = f(&t);
            t[a] = theta[a];
            (up - dn) / (2.0 * step)
        })
        .collect()
}

/// Worst relative error, with relative error measured against
/// `max(|reference|, floor)`.
fn worst_rel(a: &[f64], reference: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(reference)
        .map(|(x, r)| (x - r).abs() / r.abs().max(floor))
        .fold(0.0, f64::max)
}

/// Smallest distance of any ReLU pre-activation to its kink, over every
/// observation.
fn kink_margin(m: &ReluOneHidden, theta: &[f64], data: &Dataset) -> f64 {
    (0..data.n())
        .flat_map(|i| m.forward(theta, data.x(i)).z1)
        .map(f64::abs)
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_01_identity_transform_equivalence() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut r = rng(100 + seed);
        let (n, p, s) = (r.random_range(2..12), r.random_range(1..6), r.random_range(2..200));
        let data = random_dataset(&mut r, n, p, 2.0);
        let model = LogisticRegression::new(p);
        let prior = GaussianPrior::isotropic(p, 1.5).unwrap();
        let draws = random_draws(&mut r, s, p, 3.0);
        let id = TransformedDraws::identity(&draws, true);
        for i in 0..n {
            let nu = nu_weights(&model, &draws, &data, i).unwrap();
            let (eta, dropped) = eta_weights(&model, &draws, &id, &data, &prior, i).unwrap();
            assert_eq!(dropped, 0);
            for (a, b) in nu.normalized().iter().zip(eta.normalized()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let dt = t0.elapsed();
    verdict(
        1,
        worst <= 1e-12 && dt < Duration::from_secs(1),
        &format!(
            "max |η − ν| = {worst:.2e} over 20 instances (tol 1e-12), {:.0} ms",
            dt.as_secs_f64() * 1e3
        ),
    );
}

#[test]
fn criterion_02_derivative_oracles() {
    let t0 = Instant::now();
    let (mut worst, mut points) = (0.0f64, 0);
    let mut r = rng(2);
    while points < 100 {
        let use_relu = points % 2 == 1;
        let (model, data): (Box<dyn SigmoidalModel>, Dataset) = if use_relu {
            let (d, p) = (r.random_range(1..=3), r.random_range(1..=4));
            (Box::new(ReluOneHidden::new(d, p)), random_dataset(&mut r, 6, p, 2.0))
        } else {
            let p = r.random_range(1..=10);
            (Box::new(LogisticRegression::new(p)), random_dataset(&mut r, 6, p, 2.0))
        };
        let dim = model.param_dim();
        let theta: Vec<f64> = (0..dim).map(|_| r.random_range(-1.5..1.5)).collect();
        if use_relu {
            let m = ReluOneHidden::new((dim - 1) / (data.p() + 1), data.p());
            if kink_margin(&m, &theta, &data) < 1e-3 {
                continue;
            }
        }
        let prior = GaussianPrior::isotropic(dim, 1.3).unwrap();
        let (x, y) = (data.x(0), data.y(0));

        let mut g = vec![0.0; dim];
        model.grad_mu(&theta, x, &mut g);
        worst = worst.max(worst_rel(&g, &fd_gradient(|t| model.mu(t, x), &theta, 1e-6), 1e-6));

        let gl = grad_log_likelihood(model.as_ref(), &theta, x, y);
        let fl = fd_gradient(|t| log_likelihood(model.as_ref(), t, x, y), &theta, 1e-6);
        worst = worst.max(worst_rel(&gl, &fl, 1e-6));

        let gp = grad_log_posterior(model.as_ref(), &theta, &data, &prior);
        let fp = fd_gradient(|t| log_posterior_unnorm(model.as_ref(), t, &data, &prior), &theta, 1e-6);
        worst = worst.max(worst_rel(&gp, &fp, 1e-6));
        points += 1;
    }
    let dt = t0.elapsed();
    verdict(
        2,
        worst <= 1e-4 && dt < Duration::from_secs(5),
        &format!(
            "max rel. error {worst:.2e} over {points} points (tol 1e-4), {:.0} ms",
            dt.as_secs_f64() * 1e3
        ),
    );
}

#[test]
fn criterion_03_relu_hessian_spectrum() {
    let t0 = Instant::now();
    let (mut recon, mut ortho, mut checked) = (0.0f64, 0.0f64, 0);
    let mut r = rng(3);
    while checked < 50 {
        let (d, p) = (r.random_range(1..=3), r.random_range(1..=4));
        let m = ReluOneHidden::new(d, p);
        let theta: Vec<f64> = (0..m.param_dim()).map(|_| r.random_range(-1.5..1.5)).collect();
        let x: Vec<f64> = (0..p).map(|_| r.random_range(-2.0..2.0)).collect();
        if m.forward(&theta, &x).z1.iter().any(|z| z.abs() < 1e-3) {
            continue;
        }
        let dim = m.param_dim();
        let h = 1e-5;
        let mut t = theta.clone();
        let mut fd = vec![vec![0.0; dim]; dim];
        for a in 0..dim {
            let (mut up, mut dn) = (vec![0.0; dim], vec![0.0; dim]);
            t[a] = theta[a] + h;
            m.grad_mu(&t, &x, &mut up);
            t[a] = theta[a] - h;
            m.grad_mu(&t, &x, &mut dn);
            t[a] = theta[a];
            for b in 0..dim {
                fd[a][b] = (up[b] - dn[b]) / (2.0 * h);
            }
        }
        let sp = m.hessian_spectrum(&theta, &x);
        for a in 0..dim {
            for b in 0..dim {
                let v: f64 = sp.iter().map(|e| e.value * e.vector[a] * e.vector[b]).sum();
                recon = recon.max((v - fd[a][b]).abs());
            }
        }
        for (i, e) in sp.iter().enumerate() {
            for (j, f) in sp.iter().enumerate() {
                let dot: f64 = e.vector.iter().zip(&f.vector).map(|(u, v)| u * v).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                ortho = ortho.max((dot - target).abs());
            }
        }
        checked += 1;
    }
    let m = ReluOneHidden::new(1, 2);
    let vals: Vec<f64> = m
        .hessian_spectrum(&[1.0, 1.0, 1.0, 0.0], &[3.0, 4.0])
        .iter()
        .map(|e| e.value)
        .collect();
    let example = vals.len() == 2 && vals.contains(&5.0) && vals.contains(&-5.0);
    let dt = t0.elapsed();
    verdict(
        3,
        recon <= 1e-4 && ortho <= 1e-10 && example && dt < Duration::from_secs(5),
        &format!(
            "reconstruction {recon:.2e} (tol 1e-4), orthonormality {ortho:.2e} (tol 1e-10), x=[3,4] gives {vals:?}, {:.0} ms",
            dt.as_secs_f64() * 1e3
        ),
    );
}

/// Maximum `|log|det J_exact| − log|det J_fd||` over draws, observations
/// and step sizes for one (model, transform) pair.
fn logdet_gap<M: SigmoidalModel>(
    model: &M,
    kind: TransformKind,
    data: &Dataset,
    draws: &PosteriorDraws,
    prior: &GaussianPrior,
    skip: impl Fn(&[f64]) -> bool,
) -> (f64, usize) {
    let cache = PosteriorCache::new(model, draws, data, prior);
    let stats = marginal_stats(draws, None).unwrap();
    let q = |t: &[f64], i: usize| match kind {
        TransformKind::Kl => q_kl(model, t, data, prior, i, cache.c_ref),
        TransformKind::Var => q_var(model, t, data, prior, i, cache.c_ref),
        _ => q_ll(model, t, data, i),
    };
    let (mut worst, mut count) = (0.0f64, 0);
    for i in 0..data.n() {
        let mut qs = RowMatrix::zeros(draws.num_draws(), draws.num_params());
        for k in 0..draws.num_draws() {
            qs.row_mut(k).copy_from_slice(&q(draws.draw(k), i));
        }
        for hbar in [1.0, 0.25, 0.0625] {
            let h = step_size(&qs, &stats, hbar);
            for k in 0..draws.num_draws() {
                let theta = draws.draw(k);
                if skip(theta) {
                    continue;
                }
                let Some(exact) = exact_logdet(kind, model, theta, data, prior, i, h, cache.c_ref) else {
                    continue;
                };
                let steps: Vec<f64> = theta.iter().map(|t| 1e-6 * t.abs().max(1.0)).collect();
                let map = |t: &[f64]| t.iter().zip(q(t, i)).map(|(a, b)| a + h * b).collect();
                let fd = log_abs_det(&finite_difference_jacobian(map, theta, &steps));
                // Relative error of |det|: |det_exact/det_fd − 1| ≈ |Δ log|det||.
                worst = worst.max((exact - fd).exp_m1().abs());
                count += 1;
            }
        }
    }
    (worst, count)
}

#[test]
fn criterion_04_exact_jacobian_determinants() {
    let t0 = Instant::now();
    let mut r = rng(4);
    let mut lines = Vec::new();
    let mut worst: f64 = 0.0;
    for kind in [TransformKind::Kl, TransformKind::Var, TransformKind::Ll] {
        let data = random_dataset(&mut r, 6, 4, 1.5);
        let m = LogisticRegression::new(4);
        let prior = GaussianPrior::isotropic(4, 1.0).unwrap();
        let draws = random_draws(&mut r, 12, 4, 1.0);
        let (w, c) = logdet_gap(&m, kind, &data, &draws, &prior, |_| false);
        lines.push(format!("{kind}/logistic {w:.1e} ({c})"));
        worst = worst.max(w);

        let m = ReluOneHidden::new(2, 3);
        let data = random_dataset(&mut r, 5, 3, 1.5);
        let prior = GaussianPrior::isotropic(m.param_dim(), 1.0).unwrap();
        let draws = random_draws(&mut r, 12, m.param_dim(), 1.0);
        let (w, c) = logdet_gap(&m, kind, &data, &draws, &prior, |t| kink_margin(&m, t, &data) < 1e-3);
        lines.push(format!("{kind}/relu1 {w:.1e} ({c})"));
        worst = worst.max(w);
    }
    let dt = t0.elapsed();
    verdict(
        4,
        worst <= 1e-4 && dt < Duration::from_secs(30),
        &format!(
            "max rel. |det| error {worst:.2e} (tol 1e-4; P = 4 and 11): {}, {:.1} s",
            lines.join(", "),
            dt.as_secs_f64()
        ),
    );
}

/// Least-squares slope of `log y` against `log x`.
fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[test]
fn criterion_05_first_order_determinant_convergence() {
    let mut r = rng(5);
    let data = random_dataset(&mut r, 6, 3, 1.5);
    let m = LogisticRegression::new(3);
    let prior = GaussianPrior::isotropic(3, 1.0).unwrap();
    let theta = [0.4, -0.7, 0.9];
    let c_ref = log_posterior_unnorm(&m, &theta, &data, &prior);
    let hs: Vec<f64> = (0..7).map(|e| 10f64.powf(-1.0 - 0.5 * e as f64)).collect();
    let mut gaps = Vec::new();
    for &h in &hs {
        let mut g: f64 = 0.0;
        for kind in [TransformKind::Kl, TransformKind::Var, TransformKind::Ll] {
            let div = divergence_q(kind, &m, &theta, &data, &prior, 0, c_ref);
            let fo = first_order_logdet(div, h).unwrap();
            let ex = exact_logdet(kind, &m, &theta, &data, &prior, 0, h, c_ref).unwrap();
            g = g.max((fo - ex).abs());
        }
        gaps.push(g);
    }
    let resolvable = gaps.iter().all(|&g| g > 0.0 && g.is_finite());
    let slope = if resolvable { loglog_slope(&hs, &gaps) } else { f64::NAN };
    let pass = resolvable && (slope - 2.0).abs() <= 0.2;
    let detail = if resolvable {
        let g: Vec<String> = gaps.iter().map(|g| format!("{g:.1e}")).collect();
        format!(
            "log-log slope {slope:.3} over h ∈ [1e-4, 1e-1] (target 2 ± 0.2); gaps [{}]",
            g.join(", ")
        )
    } else {
        format!(
            "first-order and exact log-dets agree to rounding (max gap {:.1e}); logistic Jacobians are \
             identity plus rank one, so the first-order formula is exact and no h² term exists",
            gaps.iter().cloned().fold(0.0, f64::max)
        )
    };
    verdict(5, pass, &detail);
}

#[test]
fn criterion_06_gpd_calibration() {
    let t0 = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for (j, k) in [0.2, 0.5, 0.9].into_iter().enumerate() {
        let mut acc = 0.0;
        for seed in 0..50u64 {
            let mut r = rng(6000 + 100 * j as u64 + seed);
            let mut x: Vec<f64> = (0..4000)
                .map(|_| {
                    let u: f64 = r.random();
                    // GPD(k, σ = 1) inverse CDF.
                    ((1.0 - u).powf(-k) - 1.0) / k
                })
                .collect();
            x.sort_by(f64::total_cmp);
            acc += fit_gpd_tail(&x).khat;
        }
        let mean = acc / 50.0;
        pass &= (mean - k).abs() <= 0.05;
        lines.push(format!("k={k}: mean k̂ {mean:.4}"));
    }
    let dt = t0.elapsed();
    verdict(
        6,
        pass && dt < Duration::from_secs(10),
        &format!("{} (tol ±0.05), {:.0} ms", lines.join(", "), dt.as_secs_f64() * 1e3),
    );
}

fn grid_instance() -> (Dataset, LogisticRegression, GaussianPrior) {
    let x = [-2.0, -1.2, -0.5, 0.0, 0.4, 1.0, 1.7, 2.5];
    let y = [0, 0, 1, 0, 1, 0, 1, 1];
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![1.0, v]).collect();
    let data = Dataset::new(
        RowMatrix::from_rows(&rows).unwrap(),
        y.to_vec(),
        vec!["intercept".into(), "x".into()],
    )
    .unwrap();
    (
        data,
        LogisticRegression::new(2),
        GaussianPrior::isotropic(2, 2.5).unwrap(),
    )
}

#[test]
fn criterion_07_oracle_loo_equivalence() {
    let t0 = Instant::now();
    let (data, m, prior) = grid_instance();
    let grid = build_grid_posterior(&m, &data, &prior, &[(-8.0, 8.0), (-8.0, 8.0)], 401).unwrap();
    let draws = grid.sample(4000, &mut rng(7)).unwrap();
    let report = LooEngine::new(&m, &draws, &data, &prior, RunConfig::default())
        .unwrap()
        .run()
        .unwrap();

    let mut worst_z: f64 = 0.0;
    let mut exact_ic = 0.0;
    for (i, o) in report.per_observation.iter().enumerate() {
        let (x, y) = (data.x(i), data.y(i));
        let p_exact = exact_loo_expectation(&grid, &m, &data, i, |t| sigmoid(m.mu(t, x)));
        let dens = exact_loo_expectation(&grid, &m, &data, i, |t| log_bernoulli(m.mu(t, x), y).exp());
        exact_ic += -2.0 * dens.ln();
        worst_z = worst_z.max((o.loo_predictive_prob - p_exact).abs() / o.loo_predictive_prob_se);
    }
    let ic_z = (report.loo_ic - exact_ic).abs() / report.loo_ic_se;
    let dt = t0.elapsed();
    verdict(
        7,
        worst_z <= 3.0 && ic_z <= 3.0 && dt < Duration::from_secs(60),
        &format!(
            "max |Δp|/se {worst_z:.2}, LOO-IC {:.4} vs exact {exact_ic:.4} (|Δ|/se {ic_z:.2}); limit 3 se; max raw k̂ {:.2}, {:.1} s",
            report.loo_ic,
            report.per_observation.iter().map(|o| o.raw_khat).fold(f64::MIN, f64::max),
            dt.as_secs_f64()
        ),
    );
}

struct SyntheticRun {
    spec: SyntheticSpec,
    problem: loo_adapt::SyntheticProblem,
    report: LooReport,
    elapsed: Duration,
}

fn synthetic_run() -> &'static SyntheticRun {
    static RUN: OnceLock<SyntheticRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let t0 = Instant::now();
        let spec = SyntheticSpec::default();
        let problem = spec.generate().unwrap();
        let m = LogisticRegression::new(spec.p);
        let pool = worker_pool(None).unwrap();
        let run = run_parallel(
            &m,
            &problem.draws,
            &problem.data,
            &problem.prior,
            RunConfig::default(),
            None,
            &pool,
        )
        .unwrap();
        SyntheticRun {
            spec,
            problem,
            report: run.report,
            elapsed: t0.elapsed(),
        }
    })
}

#[test]
fn criterion_08_adaptation_effectiveness() {
    let run = synthetic_run();
    let obs = &run.report.per_observation;
    let flagged: Vec<_> = obs.iter().filter(|o| o.raw_khat > 0.7).collect();
    let adapted = flagged.iter().filter(|o| o.adapted).count();
    let frac_flagged = flagged.len() as f64 / obs.len() as f64;
    let frac_adapted = if flagged.is_empty() {
        0.0
    } else {
        adapted as f64 / flagged.len() as f64
    };
    let winners: Vec<String> = flagged
        .iter()
        .map(|o| {
            let w = o
                .winning_transform
                .as_ref()
                .map_or("none".to_string(), |s| format!("{}@{}", s.kind, s.hbar));
            format!("{:.2}→{:.2} {w}", o.raw_khat, o.final_khat)
        })
        .collect();
    verdict(
        8,
        frac_flagged >= 0.10 && frac_adapted >= 0.80 && run.elapsed < Duration::from_secs(600),
        &format!(
            "n={} p={} S={}: flagged {}/{} ({:.0}%, need ≥10%), adapted {adapted}/{} ({:.0}%, need ≥80%) [{}], {:.1} s",
            run.spec.n,
            run.spec.p,
            run.spec.num_draws,
            flagged.len(),
            obs.len(),
            100.0 * frac_flagged,
            flagged.len(),
            100.0 * frac_adapted,
            winners.join("; "),
            run.elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_09_step_size_bound() {
    let run = synthetic_run();
    let (data, draws, prior) = (&run.problem.data, &run.problem.draws, &run.problem.prior);
    let m = LogisticRegression::new(run.spec.p);
    let stats = marginal_stats(draws, None).unwrap();
    let cache = PosteriorCache::new(&m, draws, data, prior);
    let hbars = RunConfig::default().hbar_grid();

    let mut worst_excess = f64::NEG_INFINITY;
    let mut count = 0;
    let mut check = |disp: f64, hbar: f64| {
        worst_excess = worst_excess.max(disp - hbar);
        count += 1;
    };
    for o in &run.report.per_observation {
        for a in o.attempts.iter().filter(|a| a.spec.kind.is_gradient()) {
            check(a.max_step_sd, a.spec.hbar);
        }
    }
    // The engine short-circuits at the first success, so also sweep every
    // gradient transform over the full grid for each flagged observation.
    for o in run.report.per_observation.iter().filter(|o| o.raw_khat > 0.7) {
        for kind in [TransformKind::Kl, TransformKind::Var, TransformKind::Ll] {
            for &hbar in &hbars {
                let spec = TransformSpec::new(kind, hbar, o.index).unwrap();
                let t = apply_gradient_transform(&spec, &m, draws, data, prior, &stats, &cache, JacobianMode::Exact)
                    .unwrap();
                let mut disp: f64 = 0.0;
                for k in 0..draws.num_draws() {
                    for ((p, q), sd) in t.phi.row(k).iter().zip(draws.draw(k)).zip(&stats.sd) {
                        if *sd > 0.0 {
                            disp = disp.max((p - q).abs() / sd);
                        }
                    }
                }
                check(disp, hbar);
            }
        }
    }
    verdict(
        9,
        count > 0 && worst_excess <= 1e-9,
        &format!("{count} gradient attempts; max (displacement/sd − h̄) = {worst_excess:.2e} (tol 1e-9)"),
    );
}

#[test]
fn criterion_10_auroc_oracle() {
    let mut r = rng(10);
    let (mut worst, mut tested) = (0.0f64, 0);
    while tested < 1000 {
        let n = r.random_range(2..=12);
        let y: Vec<u8> = (0..n).map(|_| r.random_range(0..2)).collect();
        if !(y.contains(&0) && y.contains(&1)) {
            continue;
        }
        let s: Vec<f64> = (0..n).map(|_| r.random_range(0..5) as f64 / 4.0).collect();
        let a = auroc(&roc_curve(&s, &y).unwrap());
        worst = worst.max((a - pair_count_auroc(&s, &y).unwrap()).abs());
        tested += 1;
    }
    verdict(
        10,
        worst <= 1e-12,
        &format!("max |trapezoid − pair count| = {worst:.1e} over {tested} instances (tol 1e-12)"),
    );
}

#[test]
fn criterion_11_discrete_bayes_round_trip() {
    let (data, m, prior) = grid_instance();
    let grid = build_grid_posterior(&m, &data, &prior, &[(-8.0, 8.0), (-8.0, 8.0)], 201).unwrap();
    let full = grid.probabilities();
    let mut worst: f64 = 0.0;
    for i in 0..data.n() {
        let loo = grid.loo_probabilities(&m, &data, i);
        let back: Vec<f64> = loo
            .iter()
            .zip(grid.nodes.iter_rows())
            .map(|(p, t)| p * log_likelihood(&m, t, data.x(i), data.y(i)).exp())
            .collect();
        let z: f64 = back.iter().sum();
        for (b, f) in back.iter().zip(&full) {
            worst = worst.max((b / z - f).abs());
        }
    }
    verdict(
        11,
        worst <= 1e-10,
        &format!(
            "max pointwise error {worst:.1e} over {} nodes × {} observations (tol 1e-10)",
            full.len(),
            data.n()
        ),
    );
}

#[test]
fn criterion_12_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        n: 20,
        p: 30,
        num_draws: 800,
        seed: 12,
        ..SyntheticSpec::default()
    };
    let prob = spec.generate().unwrap();
    let data = dir.path().join("data.csv");
    let draws = dir.path().join("draws.csv");
    let config = dir.path().join("config.json");
    io::write_dataset(&data, &prob.data, "y").unwrap();
    io::write_draws(&draws, &prob.draws).unwrap();
    std::fs::write(&config, r#"{"rng_seed": 42, "khat_threshold": 0.5}"#).unwrap();

    let run = |out: &str, workers: &str| {
        let out = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_loo-adapt"))
            .args(["run", "--model", "logistic", "--prior-sd"])
            .arg(spec.prior_sd.to_string())
            .arg("--data")
            .arg(&data)
            .arg("--draws")
            .arg(&draws)
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--workers", workers])
            .status()
            .unwrap();
        assert!(matches!(status.code(), Some(0) | Some(3)), "{status:?}");
        let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timings");
        serde_json::to_string_pretty(&v).unwrap()
    };
    let a = run("a.json", "1");
    let b = run("b.json", "1");
    let c = run("c.json", "3");
    verdict(
        12,
        a == b && a == c,
        &format!(
            "{} bytes without timings; repeat identical: {}, 1 vs 3 workers identical: {}",
            a.len(),
            a == b,
            a == c
        ),
    );
}

//! Experiment orchestration: one seeded run of the full pipeline, batches of
//! independent runs, table presets and report files.

mod config;
pub mod presets;
mod report;
pub mod validate;

use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, OnNonPositive, SEED_ENV};
pub use report::{emit_report, write_summary, REPORT_FILES};

use crate::error::{Error, Result};
use crate::features::build_knots;
use crate::fqi::{assemble_dataset, fit_with_report, initial_value_price, optimal_strategy, qlbs_price, FitConfig};
use crate::hedging::{
    fair_price, population_variance, portfolio_recursion, rewards, sample_strategy, transaction_costs, StrategyMatrix,
};
use crate::market::{
    nonpositive_paths, propagate_impact_raw, simulate_unaffected, state_variables, ImpactSeries, PathMatrix, RateKind,
};
use crate::rng::run_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: usize,
    pub seed_used: u64,
    pub fair_price: f64,
    pub qlbs_price: f64,
    pub squared_error: f64,
    /// Average over paths of the postulated strategy's total cost.
    pub mean_cost_postulated: f64,
    /// Average over paths of the optimal strategy's total cost.
    pub mean_cost_optimal: f64,
    pub concavity_violations: usize,
    pub dropped_paths: usize,
    pub terminal_variance: f64,
    /// `mean_k -Q_0(S_0, a*_0)`; a diagnostic, not the reported price.
    pub initial_value_price: f64,
}

/// A run's report together with the matrices behind it.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub report: RunReport,
    pub unaffected: PathMatrix,
    pub quoted: PathMatrix,
    pub postulated: StrategyMatrix,
    /// Implied rates and optimal actions on the paths listed in
    /// `implied_paths` (row indices into `quoted`).
    pub implied: PathMatrix,
    pub optimal: StrategyMatrix,
    pub implied_paths: Vec<usize>,
    pub fit_warnings: Vec<String>,
}

pub fn run_experiment(config: &ExperimentConfig, run_seed: u64) -> Result<RunReport> {
    run_experiment_traced(config, run_seed).map(|t| t.report)
}

/// Positive rates from `raw`, or the kept path indices when dropping.
fn screen_paths(raw: ndarray::Array2<f64>, kind: RateKind, mode: OnNonPositive) -> Result<(PathMatrix, Vec<usize>)> {
    let bad = nonpositive_paths(&raw);
    if bad.is_empty() || mode == OnNonPositive::Error {
        let n = raw.nrows();
        return Ok((PathMatrix::new(raw, kind)?, (0..n).collect()));
    }
    let keep: Vec<usize> = (0..raw.nrows()).filter(|k| bad.binary_search(k).is_err()).collect();
    let kept = raw.select(ndarray::Axis(0), &keep);
    Ok((PathMatrix::new(kept, kind)?, keep))
}

pub fn run_experiment_traced(config: &ExperimentConfig, seed: u64) -> Result<RunTrace> {
    config.validate()?;
    let params = &config.market;
    let (n, steps) = (params.n_mc, params.steps);

    let unaffected = simulate_unaffected(params, seed)?;
    let postulated = sample_strategy(config.strategy_range, n, steps, seed);
    let impact = ImpactSeries::sample(
        n,
        steps,
        config.beta_range,
        config.m_range,
        config.share_across_paths,
        seed,
    )?;

    let raw = propagate_impact_raw(&unaffected, &postulated, &impact)?;
    let (quoted, keep) = screen_paths(raw, RateKind::Quoted, config.on_nonpositive)?;
    let mut dropped = n - keep.len();
    let (unaffected, postulated, impact) = if dropped > 0 {
        (
            unaffected.select_paths(&keep),
            postulated.select_paths(&keep),
            impact.select_paths(&keep),
        )
    } else {
        (unaffected, postulated, impact)
    };
    if quoted.n_paths() < 2 {
        return Err(Error::TooFewPaths {
            n_paths: quoted.n_paths(),
        });
    }

    let states = state_variables(&quoted, params.f_prev)?;
    let portfolio = portfolio_recursion(&quoted, &postulated, params)?;
    let reward = rewards(&quoted, &postulated, &portfolio, params, config.lambda)?;
    let dataset = assemble_dataset(&quoted, &postulated, &reward, &impact, &states, &portfolio)?;
    let knots = build_knots(&states, config.n_basis, config.degree)?;
    let fit_config = FitConfig::new(params, config.lambda, config.ridge, config.action_bounds)
        .with_action_domain(config.action_domain);
    let (model, fit_report) = fit_with_report(&dataset, &knots, &fit_config)?;

    let (optimal, violations) = optimal_strategy(&model, &states)?;
    let implied_raw = propagate_impact_raw(&unaffected, &optimal, &impact)?;
    let (implied, implied_paths) = screen_paths(implied_raw, RateKind::Implied, config.on_nonpositive)?;
    dropped += quoted.n_paths() - implied_paths.len();
    let optimal = if implied_paths.len() < quoted.n_paths() {
        optimal.select_paths(&implied_paths)
    } else {
        optimal
    };

    let mean = |v: Array1<f64>| {
        if v.is_empty() {
            f64::NAN
        } else {
            v.sum() / v.len() as f64
        }
    };
    let mean_cost_postulated = mean(transaction_costs(&quoted, &postulated, config.kappa)?);
    let mean_cost_optimal = mean(transaction_costs(&implied, &optimal, config.kappa)?);

    let fair = fair_price(&quoted, params);
    let qlbs = qlbs_price(portfolio.terminal(), params, config.lambda)?;
    let report = RunReport {
        run: 0,
        seed_used: seed,
        fair_price: fair,
        qlbs_price: qlbs,
        squared_error: (qlbs - fair).powi(2),
        mean_cost_postulated,
        mean_cost_optimal,
        concavity_violations: violations + fit_report.concavity_violations,
        dropped_paths: dropped,
        terminal_variance: population_variance(portfolio.terminal()),
        initial_value_price: initial_value_price(&model, &states),
    };
    Ok(RunTrace {
        report,
        unaffected,
        quoted,
        postulated,
        implied,
        optimal,
        implied_paths,
        fit_warnings: fit_report.warnings,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchOptions {
    /// Record failed runs and continue instead of aborting.
    pub skip_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub run: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchReport {
    pub config: ExperimentConfig,
    pub runs: Vec<RunReport>,
    pub failed_runs: Vec<FailedRun>,
    /// Mean over runs of `(qlbs - fair)²`.
    pub mse: f64,
    pub avg_lp: f64,
    pub avg_lstar: f64,
    /// Kept out of `report.json` so that reruns are byte-identical.
    #[serde(skip)]
    pub wall_time_secs: f64,
    /// Trace of the first successful run, for plot data.
    #[serde(skip)]
    pub sample: Option<RunTrace>,
}

impl BatchReport {
    fn aggregate(runs: &[RunReport]) -> (f64, f64, f64) {
        let n = runs.len() as f64;
        let avg = |f: fn(&RunReport) -> f64| runs.iter().map(f).sum::<f64>() / n;
        (
            avg(|r| r.squared_error),
            avg(|r| r.mean_cost_postulated),
            avg(|r| r.mean_cost_optimal),
        )
    }
}

/// Runs `config.n_runs` independent experiments, run `i` seeded with
/// `run_seed(config.seed, i)`.
pub fn run_batch(config: &ExperimentConfig, options: BatchOptions) -> Result<BatchReport> {
    config.validate()?;
    let start = Instant::now();
    let outcomes: Vec<(usize, u64, Result<RunTrace>)> = (0..config.n_runs)
        .into_par_iter()
        .map(|i| {
            let seed = run_seed(config.seed, i);
            let outcome = run_experiment_traced(config, seed).map(|mut trace| {
                trace.report.run = i;
                trace
            });
            (i, seed, outcome)
        })
        .collect();

    let mut runs = Vec::with_capacity(outcomes.len());
    let mut failed_runs = Vec::new();
    let mut sample = None;
    for (run, seed, outcome) in outcomes {
        match outcome {
            Ok(trace) => {
                runs.push(trace.report.clone());
                if sample.is_none() {
                    sample = Some(trace);
                }
            }
            Err(e) if options.skip_failed => failed_runs.push(FailedRun {
                run,
                seed,
                error: e.to_string(),
            }),
            Err(e) => {
                return Err(Error::Run {
                    run,
                    seed,
                    source: Box::new(e),
                })
            }
        }
    }
    if runs.is_empty() {
        return Err(Error::AllRunsFailed {
            count: failed_runs.len(),
            first: failed_runs[0].error.clone(),
        });
    }
    let (mse, avg_lp, avg_lstar) = BatchReport::aggregate(&runs);
    Ok(BatchReport {
        config: config.clone(),
        runs,
        failed_runs,
        mse,
        avg_lp,
        avg_lstar,
        wall_time_secs: start.elapsed().as_secs_f64(),
        sample,
    })
}

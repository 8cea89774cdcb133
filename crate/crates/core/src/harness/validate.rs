//! Invariant checks on a small instance, run by the `validate` subcommand.

use ndarray::{Array2, Axis};
use rand::Rng;

use crate::error::Result;
use crate::features::{action_terms, build_knots, eval_basis, psi};
use crate::fqi::{assemble_dataset, fit_with_report, optimal_strategy, qlbs_price, FitConfig};
use crate::harness::{run_experiment, ExperimentConfig};
use crate::hedging::{
    fair_price, population_variance, portfolio_recursion, rate_increments, rewards, sample_strategy, StrategyKind,
    StrategyMatrix,
};
use crate::market::{propagate_impact, simulate_unaffected, state_variables, ImpactSeries, MarketParams};
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

pub fn tiny_config() -> ExperimentConfig {
    ExperimentConfig {
        market: MarketParams {
            steps: 4,
            tau: 0.04,
            n_mc: 60,
            ..MarketParams::default()
        },
        n_basis: 5,
        n_runs: 2,
        ..ExperimentConfig::default()
    }
}

/// Runs every check; an `Err` means the pipeline itself failed.
pub fn run_invariant_suite(seed: u64) -> Result<Vec<Check>> {
    let config = tiny_config();
    let p = &config.market;
    let (n, steps) = (p.n_mc, p.steps);
    let mut checks = Vec::new();

    let unaffected = simulate_unaffected(p, seed)?;
    let postulated = sample_strategy(config.strategy_range, n, steps, seed);
    let impact = ImpactSeries::sample(n, steps, config.beta_range, config.m_range, false, seed)?;
    let no_beta = ImpactSeries::new(Array2::zeros((n, steps + 1)), impact.thinness().clone())?;
    let idle = StrategyMatrix::new(Array2::zeros((n, steps + 1)), StrategyKind::Postulated)?;

    let q = propagate_impact(&unaffected, &postulated, &no_beta)?;
    checks.push(check(
        "impact neutrality (beta = 0)",
        q.values() == unaffected.values(),
        String::new(),
    ));
    let q = propagate_impact(&unaffected, &idle, &impact)?;
    checks.push(check(
        "null-strategy neutrality (u = 0)",
        q.values() == unaffected.values(),
        String::new(),
    ));

    let idle_pi = portfolio_recursion(&q, &idle, p)?;
    let mean_pi0 = idle_pi.values().column(0).mean().unwrap_or(f64::NAN);
    let fair = fair_price(&q, p);
    let rel = ((mean_pi0 - fair) / fair).abs();
    checks.push(check(
        "discounting identity",
        rel <= 1e-12,
        format!("relative gap {rel:e}"),
    ));

    let quoted = propagate_impact(&unaffected, &postulated, &impact)?;
    let states = state_variables(&quoted, p.f_prev)?;
    let portfolio = portfolio_recursion(&quoted, &postulated, p)?;
    let reward = rewards(&quoted, &postulated, &portfolio, p, config.lambda)?;

    let incr = rate_increments(&quoted, p);
    let scale = incr.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let df_center = incr
        .axis_iter(Axis(1))
        .map(|col| {
            let m = col.mean().expect("paths");
            (col.iter().map(|v| v - m).sum::<f64>() / col.len() as f64).abs()
        })
        .fold(0.0f64, f64::max);
    checks.push(check(
        "cross-sectional centering",
        df_center <= 1e-12 * scale,
        format!("max |mean| {df_center:e}"),
    ));

    let idle_rewards = rewards(&q, &idle, &idle_pi, p, config.lambda)?;
    let max_idle = idle_rewards
        .values()
        .columns()
        .into_iter()
        .take(steps)
        .flatten()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    checks.push(check(
        "reward penalty sign (a = 0)",
        max_idle <= 0.0,
        format!("max reward {max_idle:e}"),
    ));

    let knots = build_knots(&states, config.n_basis, config.degree)?;
    let mut rng = substream(seed, Stream::Strategy, u64::MAX);
    let (lo, hi) = knots.span();
    let mut worst_sum = 0.0f64;
    let mut min_value = f64::INFINITY;
    for _ in 0..10_000 {
        let phi = eval_basis(&knots, rng.random_range(lo..=hi));
        worst_sum = worst_sum.max((phi.iter().sum::<f64>() - 1.0).abs());
        min_value = min_value.min(phi.iter().copied().fold(f64::INFINITY, f64::min));
    }
    checks.push(check(
        "basis partition of unity",
        worst_sum <= 1e-10 && min_value >= 0.0,
        format!("max |sum - 1| {worst_sum:e}, min value {min_value:e}"),
    ));

    let nb = knots.n_basis();
    let mut worst_layout = 0.0f64;
    for _ in 0..200 {
        let w: Vec<f64> = (0..3 * nb).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = rng.random_range(lo..=hi);
        let a = rng.random_range(-3.0..3.0);
        let flat: f64 = w.iter().zip(psi(s, a, &knots)).map(|(w, p)| w * p).sum();
        let phi = eval_basis(&knots, s);
        let bilinear: f64 = action_terms(a)
            .iter()
            .enumerate()
            .map(|(b, ab)| ab * (0..nb).map(|j| w[b * nb + j] * phi[j]).sum::<f64>())
            .sum();
        worst_layout = worst_layout.max((flat - bilinear).abs());
    }
    checks.push(check(
        "feature layout identity",
        worst_layout <= 1e-12,
        format!("max gap {worst_layout:e}"),
    ));

    let dataset = assemble_dataset(&quoted, &postulated, &reward, &impact, &states, &portfolio)?;
    let fit_config =
        FitConfig::new(p, config.lambda, config.ridge, config.action_bounds).with_action_domain(config.action_domain);
    let (model, report) = fit_with_report(&dataset, &knots, &fit_config)?;
    let worst_resid = report.relative_residuals.iter().copied().fold(0.0, f64::max);
    checks.push(check(
        "normal-equation residual",
        worst_resid <= 1e-8,
        format!("max relative residual {worst_resid:e}"),
    ));
    let sane = report
        .fitted_mse
        .iter()
        .zip(&report.zero_model_mse)
        .all(|(f, z)| f <= z);
    checks.push(check("regression beats zero model", sane, String::new()));

    let (optimal, _) = optimal_strategy(&model, &states)?;
    let terminal_zero = optimal.positions().column(steps).iter().all(|&v| v == 0.0);
    checks.push(check("optimal terminal position zero", terminal_zero, String::new()));

    let qlbs = qlbs_price(portfolio.terminal(), p, config.lambda)?;
    let fair = fair_price(&quoted, p);
    let premium = (-p.r_d * p.tau).exp() * config.lambda * population_variance(portfolio.terminal());
    // relative to the price level; the premium itself is a small difference
    let gap = ((qlbs - fair) - premium).abs() / qlbs.abs().max(fair.abs());
    checks.push(check(
        "price premium identity",
        gap <= 1e-12,
        format!("relative gap {gap:e}"),
    ));
    checks.push(check(
        "price ordering",
        qlbs >= fair,
        format!("qlbs {qlbs} fair {fair}"),
    ));

    let a = run_experiment(&config, seed)?;
    let b = run_experiment(&config, seed)?;
    checks.push(check("run determinism", a == b, String::new()));

    Ok(checks)
}

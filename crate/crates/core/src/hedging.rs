//! Hedging schedules, the self-financing hedge portfolio rolled back from the
//! put payoff, one-step rewards, proportional transaction costs and the plain
//! Monte Carlo price.

use std::io::{Read, Write};

use ndarray::{s, Array1, Array2, ArrayView1, Axis, Zip};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid;
use crate::market::{MarketParams, PathMatrix};
use crate::rng::{substream, Stream, UniformRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    Postulated,
    Optimal,
}

/// Hedge positions `u_t` in foreign units, `n_mc x (T+1)`. The position at
/// maturity is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyMatrix {
    positions: Array2<f64>,
    kind: StrategyKind,
}

impl StrategyMatrix {
    pub fn new(positions: Array2<f64>, kind: StrategyKind) -> Result<Self> {
        if positions.ncols() < 1 {
            return Err(Error::param("strategy", "needs at least one time column"));
        }
        let last = positions.ncols() - 1;
        if let Some((path, &value)) = positions.column(last).iter().enumerate().find(|(_, &v)| v != 0.0) {
            return Err(Error::NonZeroTerminalPosition { path, value });
        }
        if let Some(((k, t), v)) = positions.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::param(
                "strategy",
                format!("entry [{k}][{t}] = {v} is not finite"),
            ));
        }
        Ok(Self { positions, kind })
    }

    pub fn positions(&self) -> &Array2<f64> {
        &self.positions
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn select_paths(&self, keep: &[usize]) -> Self {
        Self {
            positions: self.positions.select(Axis(0), keep),
            kind: self.kind,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        grid::write_csv(&self.positions, writer)
    }

    pub fn read_csv<R: Read>(reader: R, kind: StrategyKind) -> Result<Self> {
        Self::new(grid::read_csv(reader)?, kind)
    }
}

/// Postulated positions drawn i.i.d. from `range` for `t < T`.
pub fn sample_strategy(range: UniformRange, n_mc: usize, steps: usize, seed: u64) -> StrategyMatrix {
    let sampler = range.sampler();
    let mut positions = Array2::<f64>::zeros((n_mc, steps + 1));
    positions
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(k, mut row)| {
            let mut rng = substream(seed, Stream::Strategy, k as u64);
            for t in 0..steps {
                row[t] = sampler.draw(&mut rng);
            }
        });
    StrategyMatrix {
        positions,
        kind: StrategyKind::Postulated,
    }
}

/// Put payoff `max(K - f, 0)`.
pub fn payoff(f_terminal: f64, strike: f64) -> f64 {
    (strike - f_terminal).max(0.0)
}

pub(crate) fn mean(values: ArrayView1<f64>) -> f64 {
    values.sum() / values.len() as f64
}

/// Cross-sectional variance over paths, normalized by the path count.
pub fn population_variance(values: ArrayView1<f64>) -> f64 {
    let m = mean(values);
    values.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// Hedge-portfolio values `Π_t`, `n_mc x (T+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioMatrix {
    values: Array2<f64>,
}

impl PortfolioMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn terminal(&self) -> ArrayView1<'_, f64> {
        self.values.column(self.values.ncols() - 1)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        grid::write_csv(&self.values, writer)
    }
}

/// Discounted rate increments `ΔF_t = F_{t+1} - exp(r_d dt) F_t`, `n_mc x T`.
pub fn rate_increments(rates: &PathMatrix, params: &MarketParams) -> Array2<f64> {
    let growth = (params.r_d * params.dt()).exp();
    let f = rates.values();
    let n_t = f.ncols() - 1;
    &f.slice(s![.., 1..]) - &(f.slice(s![.., ..n_t]).to_owned() * growth)
}

fn check_pair(quoted: &PathMatrix, strategy: &StrategyMatrix) -> Result<()> {
    grid::check_shape("strategy", strategy.positions(), quoted.values().dim())
}

/// Rolls the self-financing portfolio back from `Π_T = max(K - F_T, 0)`:
/// `Π_t = γ (Π_{t+1} - u_t ΔF_t)`.
pub fn portfolio_recursion(
    quoted: &PathMatrix,
    strategy: &StrategyMatrix,
    params: &MarketParams,
) -> Result<PortfolioMatrix> {
    check_pair(quoted, strategy)?;
    let gamma = params.gamma();
    let increments = rate_increments(quoted, params);
    let f = quoted.values();
    let last = f.ncols() - 1;
    let mut values = Array2::<f64>::zeros(f.dim());
    Zip::from(values.rows_mut())
        .and(f.rows())
        .and(strategy.positions().rows())
        .and(increments.rows())
        .par_for_each(|mut pi, f, u, df| {
            pi[last] = payoff(f[last], params.strike);
            for t in (0..last).rev() {
                pi[t] = gamma * (pi[t + 1] - u[t] * df[t]);
            }
        });
    Ok(PortfolioMatrix { values })
}

/// One-step rewards `R_t`, `n_mc x (T+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMatrix {
    values: Array2<f64>,
}

impl RewardMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Rewards realized path by path with cross-sectionally demeaned portfolio
/// values and rate increments:
///
/// ```text
/// R_t = γ a_t ΔF_t - λ γ² (Π̂²_{t+1} - 2 a_t ΔF̂_t Π̂_{t+1} + a_t² ΔF̂_t²),  t < T
/// R_T = -λ Var[Π_T]
/// ```
pub fn rewards(
    quoted: &PathMatrix,
    strategy: &StrategyMatrix,
    portfolio: &PortfolioMatrix,
    params: &MarketParams,
    lambda: f64,
) -> Result<RewardMatrix> {
    check_pair(quoted, strategy)?;
    grid::check_shape("portfolio", portfolio.values(), quoted.values().dim())?;
    let n_paths = quoted.n_paths();
    if n_paths < 2 {
        return Err(Error::TooFewPaths { n_paths });
    }
    let gamma = params.gamma();
    let increments = rate_increments(quoted, params);
    let pi = portfolio.values();
    let last = pi.ncols() - 1;

    let mut values = Array2::<f64>::zeros(pi.dim());
    for t in 0..last {
        let df = increments.column(t);
        let pi_next = pi.column(t + 1);
        let df_mean = mean(df);
        let pi_mean = mean(pi_next);
        let a = strategy.positions().column(t);
        Zip::from(values.column_mut(t))
            .and(a)
            .and(df)
            .and(pi_next)
            .for_each(|r, &a, &df, &pi_next| {
                let df_hat = df - df_mean;
                let pi_hat = pi_next - pi_mean;
                let risk = pi_hat * pi_hat - 2.0 * a * df_hat * pi_hat + a * a * df_hat * df_hat;
                *r = gamma * a * df - lambda * gamma * gamma * risk;
            });
    }
    let terminal = -lambda * population_variance(pi.column(last));
    values.column_mut(last).fill(terminal);
    Ok(RewardMatrix { values })
}

/// Per-path proportional costs `Σ_{t=0}^{T} κ |F_t Δa_t|` with `Δa_0 = a_0`.
pub fn transaction_costs(paths: &PathMatrix, strategy: &StrategyMatrix, kappa: f64) -> Result<Array1<f64>> {
    check_pair(paths, strategy)?;
    let mut totals = Array1::<f64>::zeros(paths.n_paths());
    Zip::from(&mut totals)
        .and(paths.values().rows())
        .and(strategy.positions().rows())
        .par_for_each(|total, f, a| {
            let mut prev = 0.0;
            let mut acc = 0.0;
            for t in 0..f.len() {
                acc += kappa * (f[t] * (a[t] - prev)).abs();
                prev = a[t];
            }
            *total = acc;
        });
    Ok(totals)
}

/// Plain Monte Carlo put price on the terminal column of `quoted`.
pub fn fair_price(quoted: &PathMatrix, params: &MarketParams) -> f64 {
    let last = quoted.n_times() - 1;
    let payoffs = quoted.values().column(last).mapv(|f| payoff(f, params.strike));
    (-params.r_d * params.tau).exp() * mean(payoffs.view())
}

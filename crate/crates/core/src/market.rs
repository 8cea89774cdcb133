//! Unaffected exchange-rate simulation and the linear supply-curve order book
//! through which hedging orders permanently move the quoted rate.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid;
use crate::hedging::{StrategyKind, StrategyMatrix};
use crate::rng::{substream, Stream, UniformRange};

/// Static model inputs. Rates are domestic units per foreign unit, rates of
/// return are per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketParams {
    pub f0: f64,
    /// Unaffected rate one step before `t = 0`, anchoring the first state.
    pub f_prev: f64,
    #[serde(rename = "k")]
    pub strike: f64,
    pub mu: f64,
    pub sigma: f64,
    pub r_d: f64,
    /// Recorded only; the physical drift is `mu`.
    pub r_f: f64,
    pub tau: f64,
    #[serde(rename = "t")]
    pub steps: usize,
    pub n_mc: usize,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            f0: 2.4,
            f_prev: 2.3,
            strike: 3.0,
            mu: 0.05,
            sigma: 0.05,
            r_d: 0.05,
            r_f: 0.0,
            tau: 0.3,
            steps: 30,
            n_mc: 1000,
        }
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("f0", self.f0),
            ("f_prev", self.f_prev),
            ("k", self.strike),
            ("tau", self.tau),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(
                    format!("market.{name}"),
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        for (name, v) in [("mu", self.mu), ("r_d", self.r_d), ("r_f", self.r_f)] {
            if !v.is_finite() {
                return Err(Error::param(format!("market.{name}"), "must be finite"));
            }
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::param(
                "market.sigma",
                format!("must be finite and >= 0, got {}", self.sigma),
            ));
        }
        if self.steps < 2 {
            return Err(Error::param(
                "market.t",
                format!("need at least 2 steps, got {}", self.steps),
            ));
        }
        if self.n_mc < 1 {
            return Err(Error::param("market.n_mc", "need at least 1 path"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.tau / self.steps as f64
    }

    /// One-step discount factor `exp(-r_d dt)`.
    pub fn gamma(&self) -> f64 {
        (-self.r_d * self.dt()).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    Unaffected,
    Quoted,
    Implied,
}

/// Exchange rates indexed `[path][time]`, `time = 0..=T`. Every entry is
/// strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMatrix {
    values: Array2<f64>,
    kind: RateKind,
}

impl PathMatrix {
    pub fn new(values: Array2<f64>, kind: RateKind) -> Result<Self> {
        if let Some((path, time, value)) = first_nonpositive(values.view()) {
            return Err(Error::NonPositiveRate { path, time, value });
        }
        Ok(Self { values, kind })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn kind(&self) -> RateKind {
        self.kind
    }

    pub fn n_paths(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_times(&self) -> usize {
        self.values.ncols()
    }

    pub fn select_paths(&self, keep: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), keep),
            kind: self.kind,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        grid::write_csv(&self.values, writer)
    }

    pub fn read_csv<R: Read>(reader: R, kind: RateKind) -> Result<Self> {
        Self::new(grid::read_csv(reader)?, kind)
    }
}

fn first_nonpositive(values: ArrayView2<f64>) -> Option<(usize, usize, f64)> {
    values
        .indexed_iter()
        .find(|(_, &v)| !(v > 0.0))
        .map(|((k, t), &v)| (k, t, v))
}

/// Paths (row indices, ascending) holding at least one non-positive rate.
pub fn nonpositive_paths(values: &Array2<f64>) -> Vec<usize> {
    values
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, row)| row.iter().any(|&v| !(v > 0.0)))
        .map(|(k, _)| k)
        .collect()
}

/// Market impact `beta` and order-book thinness `m`, both `n_mc x (T+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactSeries {
    beta: Array2<f64>,
    thinness: Array2<f64>,
}

impl ImpactSeries {
    pub fn new(beta: Array2<f64>, thinness: Array2<f64>) -> Result<Self> {
        grid::check_shape("thinness", &thinness, beta.dim())?;
        if let Some(((k, t), &b)) = beta.indexed_iter().find(|(_, &b)| !(0.0..1.0).contains(&b)) {
            return Err(Error::param("beta", format!("entry [{k}][{t}] = {b} outside [0, 1)")));
        }
        if let Some(((k, t), &m)) = thinness.indexed_iter().find(|(_, &m)| !(m > 0.0 && m.is_finite())) {
            return Err(Error::param("thinness", format!("entry [{k}][{t}] = {m} must be > 0")));
        }
        Ok(Self { beta, thinness })
    }

    /// Draws `beta ~ U[beta_range)` and `m ~ U[m_range)` independently per
    /// path and time, or per time only when `share_across_paths` is set.
    pub fn sample(
        n_mc: usize,
        steps: usize,
        beta_range: UniformRange,
        m_range: UniformRange,
        share_across_paths: bool,
        seed: u64,
    ) -> Result<Self> {
        let n_rows = if share_across_paths { 1 } else { n_mc };
        let draw = |stream: Stream, range: UniformRange| {
            let sampler = range.sampler();
            let rows: Vec<f64> = (0..n_rows)
                .into_par_iter()
                .flat_map_iter(|k| {
                    let mut rng = substream(seed, stream, k as u64);
                    (0..=steps).map(move |_| sampler.draw(&mut rng)).collect::<Vec<_>>()
                })
                .collect();
            let sampled = Array2::from_shape_vec((n_rows, steps + 1), rows).expect("shape");
            if share_across_paths {
                sampled.broadcast((n_mc, steps + 1)).expect("broadcast").to_owned()
            } else {
                sampled
            }
        };
        Self::new(
            draw(Stream::ImpactBeta, beta_range),
            draw(Stream::ImpactThinness, m_range),
        )
    }

    pub fn beta(&self) -> &Array2<f64> {
        &self.beta
    }

    pub fn thinness(&self) -> &Array2<f64> {
        &self.thinness
    }

    pub fn select_paths(&self, keep: &[usize]) -> Self {
        Self {
            beta: self.beta.select(Axis(0), keep),
            thinness: self.thinness.select(Axis(0), keep),
        }
    }
}

/// Log-return states `S_t = ln(F_t / F_{t-1})`, with `F_{-1}` the supplied
/// anchor rate.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    values: Array2<f64>,
}

impl StateMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(((path, time), &value)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteState { path, time, value });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Simulates unaffected rates with the exact log-Euler GBM step.
pub fn simulate_unaffected(params: &MarketParams, seed: u64) -> Result<PathMatrix> {
    params.validate()?;
    let steps = params.steps;
    let dt = params.dt();
    let drift = (params.mu - 0.5 * params.sigma * params.sigma) * dt;
    let vol = params.sigma * dt.sqrt();

    let mut values = Array2::<f64>::zeros((params.n_mc, steps + 1));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(k, mut row)| {
            let mut rng = substream(seed, Stream::Unaffected, k as u64);
            let mut f = params.f0;
            row[0] = f;
            for t in 1..=steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                f *= (drift + vol * z).exp();
                row[t] = f;
            }
        });
    PathMatrix::new(values, RateKind::Unaffected)
}

/// Linear supply curve: price of an order of size `u` at unaffected rate `f`.
pub fn supply_price(f: f64, m: f64, u: f64) -> f64 {
    f + m * u
}

/// Uniform density of the hypothetical book, `1 / (2m)`.
pub fn book_density(m: f64) -> Result<f64> {
    if !(m > 0.0) {
        return Err(Error::param("m", format!("thinness must be > 0, got {m}")));
    }
    Ok(1.0 / (2.0 * m))
}

/// Cost of walking the book for `u` units: `∫_f^{f+2mu} z / (2m) dz`.
pub fn order_cost(f: f64, m: f64, u: f64) -> f64 {
    f * u + m * u * u
}

/// Rates after the hedging schedule in `strategy` shifts the book, without
/// the positivity check. Row `k`:
///
/// ```text
/// du_0 = u_0,  du_t = u_t - u_{t-1}
/// mid_t  = F_t + sum_{j<t} 2 beta_j m_j du_j
/// out_t  = mid_t + 2 beta_t m_t du_t
/// ```
pub fn propagate_impact_raw(
    unaffected: &PathMatrix,
    strategy: &StrategyMatrix,
    impact: &ImpactSeries,
) -> Result<Array2<f64>> {
    let dim = unaffected.values().dim();
    grid::check_shape("strategy", strategy.positions(), dim)?;
    grid::check_shape("beta", impact.beta(), dim)?;

    let mut out = unaffected.values().clone();
    Zip::from(out.rows_mut())
        .and(strategy.positions().rows())
        .and(impact.beta().rows())
        .and(impact.thinness().rows())
        .par_for_each(|mut row, u, beta, m| {
            let mut permanent = 0.0;
            let mut prev = 0.0;
            for t in 0..row.len() {
                let du = u[t] - prev;
                prev = u[t];
                let shift = 2.0 * beta[t] * m[t] * du;
                // adding an exact zero leaves a positive rate bit-identical
                row[t] += permanent + shift;
                permanent += shift;
            }
        });
    Ok(out)
}

/// Quoted (postulated strategy) or implied (optimal strategy) rates.
pub fn propagate_impact(
    unaffected: &PathMatrix,
    strategy: &StrategyMatrix,
    impact: &ImpactSeries,
) -> Result<PathMatrix> {
    let values = propagate_impact_raw(unaffected, strategy, impact)?;
    let kind = match strategy.kind() {
        StrategyKind::Postulated => RateKind::Quoted,
        StrategyKind::Optimal => RateKind::Implied,
    };
    PathMatrix::new(values, kind)
}

pub fn state_variables(paths: &PathMatrix, f_prev: f64) -> Result<StateMatrix> {
    if !(f_prev > 0.0) {
        return Err(Error::NonPositiveRate {
            path: 0,
            time: 0,
            value: f_prev,
        });
    }
    let rates = paths.values();
    let mut states = Array2::<f64>::zeros(rates.dim());
    Zip::from(states.rows_mut()).and(rates.rows()).par_for_each(|mut s, f| {
        let mut prev = f_prev;
        for t in 0..f.len() {
            s[t] = (f[t] / prev).ln();
            prev = f[t];
        }
    });
    StateMatrix::new(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn single(values: Array2<f64>) -> PathMatrix {
        PathMatrix::new(values, RateKind::Unaffected).unwrap()
    }

    #[test]
    fn zero_volatility_path_is_deterministic() {
        let params = MarketParams {
            sigma: 0.0,
            n_mc: 4,
            ..MarketParams::default()
        };
        let paths = simulate_unaffected(&params, 11).unwrap();
        let expected = 2.4 * (0.05f64 * 0.3).exp();
        for k in 0..4 {
            assert_eq!(paths.values()[[k, 0]], 2.4);
            assert_abs_diff_eq!(paths.values()[[k, 30]], expected, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(expected, 2.436271, epsilon = 1e-6);
    }

    #[test]
    fn flat_dynamics_stay_at_f0() {
        let params = MarketParams {
            sigma: 0.0,
            mu: 0.0,
            n_mc: 3,
            ..MarketParams::default()
        };
        let paths = simulate_unaffected(&params, 1).unwrap();
        assert!(paths.values().iter().all(|&v| v == 2.4));
    }

    #[test]
    fn supply_curve_and_book() {
        assert_abs_diff_eq!(supply_price(2.4, 0.02, 1.0), 2.42, epsilon = 1e-15);
        assert_eq!(supply_price(2.4, 0.02, 0.0), 2.4);
        assert_abs_diff_eq!(supply_price(2.4, 0.02, -1.0), 2.38, epsilon = 1e-15);
        assert_abs_diff_eq!(book_density(0.02).unwrap(), 25.0, epsilon = 1e-12);
        assert_eq!(book_density(0.5).unwrap(), 1.0);
        assert!(book_density(0.0).is_err());
        assert!(book_density(-1.0).is_err());
        assert_abs_diff_eq!(order_cost(2.4, 0.02, 2.0), 4.88, epsilon = 1e-12);
        assert_eq!(order_cost(2.4, 0.02, 0.0), 0.0);
        assert_abs_diff_eq!(order_cost(2.4, 0.05, 2.0), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn marginal_rate_is_where_book_depth_reaches_order_size() {
        let (f, m, u) = (2.4, 0.02, 1.7);
        let depth = (f + 2.0 * m * u - f) * book_density(m).unwrap();
        assert_abs_diff_eq!(depth, u, epsilon = 1e-12);
        // order cost equals the midpoint rule on the uniform book, exact for linear integrands
        let z_u = f + 2.0 * m * u;
        assert_abs_diff_eq!(
            order_cost(f, m, u),
            (z_u * z_u - f * f) / 2.0 * book_density(m).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn hand_evaluated_impact_chain() {
        let unaffected = single(array![[2.4, 2.41, 2.43]]);
        let strategy = StrategyMatrix::new(array![[1.0, 1.5, 0.0]], StrategyKind::Postulated).unwrap();
        let impact = ImpactSeries::new(array![[0.5, 0.5, 0.5]], array![[0.02, 0.02, 0.02]]).unwrap();
        let quoted = propagate_impact(&unaffected, &strategy, &impact).unwrap();
        assert_eq!(quoted.kind(), RateKind::Quoted);
        for (got, want) in quoted.values().iter().zip([2.42, 2.44, 2.43]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn nonpositive_rates_are_reported() {
        let unaffected = single(array![[0.1, 0.1, 0.1]]);
        let strategy = StrategyMatrix::new(array![[-5.0, -5.0, 0.0]], StrategyKind::Postulated).unwrap();
        let impact = ImpactSeries::new(array![[0.9, 0.9, 0.9]], array![[0.1, 0.1, 0.1]]).unwrap();
        match propagate_impact(&unaffected, &strategy, &impact) {
            Err(Error::NonPositiveRate {
                path: 0,
                time: 0,
                value,
            }) => assert!(value < 0.0),
            other => panic!("unexpected {other:?}"),
        }
        let raw = propagate_impact_raw(&unaffected, &strategy, &impact).unwrap();
        assert_eq!(nonpositive_paths(&raw), vec![0]);
    }

    #[test]
    fn states_are_log_returns() {
        let flat = single(array![[2.4, 2.4, 2.4]]);
        assert!(state_variables(&flat, 2.4).unwrap().values().iter().all(|&s| s == 0.0));

        let p = single(array![[2.42, 2.44, 2.43]]);
        let s = state_variables(&p, 2.3).unwrap();
        assert_abs_diff_eq!(s.values()[[0, 0]], 0.050858, epsilon = 1e-6);
        let mut cum = 0.0;
        for t in 0..3 {
            cum += s.values()[[0, t]];
            assert_abs_diff_eq!(cum.exp(), p.values()[[0, t]] / 2.3, epsilon = 1e-14);
        }
        assert!(state_variables(&p, 0.0).is_err());
    }

    #[test]
    fn impact_sampling_respects_ranges_and_sharing() {
        let b = UniformRange::new(0.0, 1.0).unwrap();
        let m = UniformRange::new(0.01, 0.03).unwrap();
        let imp = ImpactSeries::sample(50, 5, b, m, false, 3).unwrap();
        assert!(imp.thinness().iter().all(|&x| (0.01..0.03).contains(&x)));
        assert_ne!(imp.beta().row(0), imp.beta().row(1));

        let shared = ImpactSeries::sample(50, 5, b, m, true, 3).unwrap();
        assert_eq!(shared.beta().row(0), shared.beta().row(49));
        assert_eq!(shared.thinness().row(0), shared.thinness().row(7));

        let zero = UniformRange::new(0.0, 0.0).unwrap();
        let none = ImpactSeries::sample(4, 3, zero, m, false, 3).unwrap();
        assert!(none.beta().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = [
            MarketParams {
                f0: 0.0,
                ..Default::default()
            },
            MarketParams {
                f_prev: -1.0,
                ..Default::default()
            },
            MarketParams {
                sigma: -0.1,
                ..Default::default()
            },
            MarketParams {
                steps: 1,
                ..Default::default()
            },
            MarketParams {
                n_mc: 0,
                ..Default::default()
            },
            MarketParams {
                tau: 0.0,
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
        let p = MarketParams::default();
        assert_abs_diff_eq!(p.dt() * p.steps as f64, p.tau, epsilon = 1e-15);
    }
}

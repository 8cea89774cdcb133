//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library's numerical kernels: the basis is the
//! textbook Cox–de Boor recursion, least squares goes through an SVD of the
//! augmented ridge system, and the greedy maximum is a direct comparison of
//! candidate points.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use impact_qlbs::features::{build_knots, KnotVector};
use impact_qlbs::fqi::{assemble_dataset, ActionBounds, Dataset, FitConfig};
use impact_qlbs::hedging::{portfolio_recursion, rewards, sample_strategy};
use impact_qlbs::market::{
    propagate_impact, simulate_unaffected, state_variables, ImpactSeries, MarketParams, StateMatrix,
};
use impact_qlbs::rng::UniformRange;

/// `e^{-r_d τ} (K - F_0 e^{r_d τ})` with Table-1 inputs: the price of the put
/// when the rate grows deterministically at the domestic rate.
pub fn closed_form_put() -> f64 {
    let (k, f0, r, tau) = (3.0f64, 2.4f64, 0.05f64, 0.3f64);
    (-r * tau).exp() * (k - f0 * (r * tau).exp())
}

/// Cox–de Boor recursion for `N_{i,p}(s)`, with `0/0 = 0` and the right end
/// of the span closed.
pub fn cox_de_boor(knots: &[f64], i: usize, p: usize, s: f64) -> f64 {
    let last = knots[knots.len() - 1];
    if p == 0 {
        let (a, b) = (knots[i], knots[i + 1]);
        let inside = a <= s && s < b;
        let right_end = s == last && b == last && a < b;
        return if inside || right_end { 1.0 } else { 0.0 };
    }
    let mut value = 0.0;
    let den_left = knots[i + p] - knots[i];
    if den_left > 0.0 {
        value += (s - knots[i]) / den_left * cox_de_boor(knots, i, p - 1, s);
    }
    let den_right = knots[i + p + 1] - knots[i + 1];
    if den_right > 0.0 {
        value += (knots[i + p + 1] - s) / den_right * cox_de_boor(knots, i + 1, p - 1, s);
    }
    value
}

pub fn naive_basis(knots: &[f64], degree: usize, s: f64) -> Vec<f64> {
    let n_basis = knots.len() - degree - 1;
    (0..n_basis).map(|i| cox_de_boor(knots, i, degree, s)).collect()
}

/// Features `[Φ, aΦ, a²/2 Φ]` from the naive basis.
pub fn naive_psi(knots: &[f64], degree: usize, s: f64, a: f64) -> Vec<f64> {
    let phi = naive_basis(knots, degree, s);
    [1.0, a, 0.5 * a * a]
        .iter()
        .flat_map(|&c| phi.iter().map(move |&p| c * p))
        .collect()
}

/// `max_{a ∈ [lo, hi]} u0 + a u1 + a²/2 u2` by comparing both endpoints
/// and, if it lies inside, the stationary point.
pub fn brute_max(u: [f64; 3], lo: f64, hi: f64) -> f64 {
    let q = |a: f64| u[0] + a * u[1] + 0.5 * a * a * u[2];
    let mut best = q(lo).max(q(hi));
    if u[2] != 0.0 {
        let vertex = -u[1] / u[2];
        if lo < vertex && vertex < hi {
            best = best.max(q(vertex));
        }
    }
    best
}

/// Search range at one step: observed actions clamped into the bounds.
pub fn observed_range(actions: &[f64], bounds: ActionBounds) -> (f64, f64) {
    let lo = actions
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .clamp(bounds.lo(), bounds.hi());
    let hi = actions
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .clamp(bounds.lo(), bounds.hi());
    if lo < hi {
        (lo, hi)
    } else {
        (bounds.lo(), bounds.hi())
    }
}

/// Ridge least squares `min ‖Xw - y‖² + ridge ‖w‖²` via the SVD of the
/// stacked system `[X; √ridge I] w = [y; 0]`.
pub fn ridge_lstsq(x: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> DVector<f64> {
    let (n, d) = x.shape();
    let mut a = DMatrix::<f64>::zeros(n + d, d);
    a.view_mut((0, 0), (n, d)).copy_from(x);
    for i in 0..d {
        a[(n + i, i)] = ridge.sqrt();
    }
    let mut b = DVector::<f64>::zeros(n + d);
    b.rows_mut(0, n).copy_from(y);
    a.svd(true, true).solve(&b, 1e-14).expect("svd solve")
}

/// Reference fitted Q-iteration. Returns, per step, the flattened weights
/// and the fitted values at the data points.
pub fn dense_fqi(dataset: &Dataset, knots: &[f64], degree: usize, config: &FitConfig) -> Vec<(DVector<f64>, Vec<f64>)> {
    let n = dataset.n_paths();
    let steps = dataset.n_steps();
    let nb = knots.len() - degree - 1;
    let terminal: Vec<f64> = dataset.terminal_portfolio().to_vec();
    let mean = terminal.iter().sum::<f64>() / n as f64;
    let var = terminal.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let mut next: Vec<f64> = terminal.iter().map(|pi| -pi - config.lambda * var).collect();

    let mut out = vec![(DVector::zeros(0), Vec::new()); steps];
    for t in (0..steps).rev() {
        let mut x = DMatrix::<f64>::zeros(n, 3 * nb);
        let mut y = DVector::<f64>::zeros(n);
        for k in 0..n {
            let psi = naive_psi(knots, degree, dataset.states()[[k, t]], dataset.actions()[[k, t]]);
            for (j, p) in psi.into_iter().enumerate() {
                x[(k, j)] = p;
            }
            y[k] = dataset.rewards()[[k, t]] + config.gamma * next[k];
        }
        let w = ridge_lstsq(&x, &y, config.ridge);
        let fitted: Vec<f64> = (&x * &w).iter().copied().collect();

        let actions: Vec<f64> = dataset.actions().column(t).to_vec();
        let (lo, hi) = observed_range(&actions, config.action_bounds);
        for k in 0..n {
            let phi = naive_basis(knots, degree, dataset.states()[[k, t]]);
            let row = |b: usize| (0..nb).map(|j| w[b * nb + j] * phi[j]).sum::<f64>();
            next[k] = brute_max([row(0), row(1), row(2)], lo, hi);
        }
        out[t] = (w, fitted);
    }
    out
}

/// Small end-to-end instance: T steps of 0.01 years, Table-1 market
/// otherwise.
pub struct Instance {
    pub params: MarketParams,
    pub dataset: Dataset,
    pub states: StateMatrix,
    pub knots: KnotVector,
    pub config: FitConfig,
}

pub fn instance(steps: usize, n_mc: usize, n_basis: usize, seed: u64) -> Instance {
    let params = MarketParams {
        steps,
        tau: 0.01 * steps as f64,
        n_mc,
        ..MarketParams::default()
    };
    let range = |lo, hi| UniformRange::new(lo, hi).unwrap();
    let unaffected = simulate_unaffected(&params, seed).unwrap();
    let strategy = sample_strategy(range(-1.0, 1.0), n_mc, steps, seed);
    let impact = ImpactSeries::sample(n_mc, steps, range(0.0, 1.0), range(0.01, 0.03), false, seed).unwrap();
    let quoted = propagate_impact(&unaffected, &strategy, &impact).unwrap();
    let states = state_variables(&quoted, params.f_prev).unwrap();
    let portfolio = portfolio_recursion(&quoted, &strategy, &params).unwrap();
    let reward = rewards(&quoted, &strategy, &portfolio, &params, 0.001).unwrap();
    let dataset = assemble_dataset(&quoted, &strategy, &reward, &impact, &states, &portfolio).unwrap();
    let knots = build_knots(&states, n_basis, 3).unwrap();
    let config = FitConfig::new(&params, 0.001, 1e-3, ActionBounds::default());
    Instance {
        params,
        dataset,
        states,
        knots,
        config,
    }
}

/// Rates after impact, summing the whole impact history at every step.
pub fn cumulative_impact(f: &Array2<f64>, u: &Array2<f64>, beta: &Array2<f64>, m: &Array2<f64>) -> Array2<f64> {
    let mut out = f.clone();
    for k in 0..f.nrows() {
        for t in 0..f.ncols() {
            let mut total = 0.0;
            for j in 0..=t {
                let du = if j == 0 { u[[k, 0]] } else { u[[k, j]] - u[[k, j - 1]] };
                total += 2.0 * beta[[k, j]] * m[[k, j]] * du;
            }
            out[[k, t]] = f[[k, t]] + total;
        }
    }
    out
}

/// Per-path proportional costs by a plain double loop.
pub fn scalar_costs(f: &Array2<f64>, a: &Array2<f64>, kappa: f64) -> Vec<f64> {
    (0..f.nrows())
        .map(|k| {
            let mut total = 0.0;
            for t in 0..f.ncols() {
                let prev = if t == 0 { 0.0 } else { a[[k, t - 1]] };
                total += kappa * (f[[k, t]] * (a[[k, t]] - prev)).abs();
            }
            total
        })
        .collect()
}

//! Backward fitted Q-iteration over the off-policy dataset.
//!
//! At every step `t = T-1, ..., 0` the regression targets are
//! `y = R_t + γ max_a Q_{t+1}(S_{t+1}, a)`, anchored by the terminal value
//! `Q_T = -Π_T - λ Var[Π_T]`. Weights solve the ridge normal equations
//! `(Σ ψψᵀ + ridge I) w = Σ ψ y`. Because `Q_t` is quadratic in the action,
//! the maximum is taken analytically at `a* = -u1 / u2` when concave.
//!
//! By default the maximization at step `t` is restricted to the range of
//! actions observed at `t` (intersected with the action bounds). Outside
//! that range the quadratic is pure extrapolation, and feeding extrapolated
//! maxima back into the targets makes the backward recursion diverge.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{action_terms, psi_from_basis, KnotVector};
use crate::grid::check_shape;
use crate::hedging::{mean, population_variance, PortfolioMatrix, RewardMatrix, StrategyKind, StrategyMatrix};
use crate::market::{propagate_impact, ImpactSeries, MarketParams, PathMatrix, StateMatrix};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Paths per block of the normal-equation reduction. Blocks are combined in
/// a fixed pairwise tree, so sums do not depend on the thread count.
const REDUCTION_BLOCK: usize = 64;

/// Transition samples `(S_t, S_{t+1}, a_t, R_t, β_t, M_t)` for
/// `t = 0..T-1` on every path, plus the terminal portfolio values. The rates
/// themselves are not kept; they enter only through the states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// `n_mc x (T+1)`, so column `t + 1` holds `S_{t+1}`.
    states: Array2<f64>,
    actions: Array2<f64>,
    rewards: Array2<f64>,
    beta: Array2<f64>,
    thinness: Array2<f64>,
    terminal_portfolio: Array1<f64>,
}

impl Dataset {
    pub fn new(
        states: Array2<f64>,
        actions: Array2<f64>,
        rewards: Array2<f64>,
        beta: Array2<f64>,
        thinness: Array2<f64>,
        terminal_portfolio: Array1<f64>,
    ) -> Result<Self> {
        let (n, cols) = states.dim();
        if cols < 2 {
            return Err(Error::param("dataset.states", "need at least two time columns"));
        }
        let steps = cols - 1;
        for (what, m) in [
            ("actions", &actions),
            ("rewards", &rewards),
            ("beta", &beta),
            ("thinness", &thinness),
        ] {
            check_shape(what, m, (n, steps))?;
        }
        if terminal_portfolio.len() != n {
            return Err(Error::ShapeMismatch {
                what: "terminal_portfolio".into(),
                expected: (n, 1),
                found: (terminal_portfolio.len(), 1),
            });
        }
        let all = [&states, &actions, &rewards, &beta, &thinness];
        if all.iter().any(|m| m.iter().any(|v| !v.is_finite())) || terminal_portfolio.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("dataset", "all entries must be finite"));
        }
        Ok(Self {
            states,
            actions,
            rewards,
            beta,
            thinness,
            terminal_portfolio,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.states.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.actions.ncols()
    }

    pub fn n_transitions(&self) -> usize {
        self.actions.len()
    }

    pub fn states(&self) -> &Array2<f64> {
        &self.states
    }

    pub fn actions(&self) -> &Array2<f64> {
        &self.actions
    }

    pub fn rewards(&self) -> &Array2<f64> {
        &self.rewards
    }

    pub fn beta(&self) -> &Array2<f64> {
        &self.beta
    }

    pub fn thinness(&self) -> &Array2<f64> {
        &self.thinness
    }

    pub fn terminal_portfolio(&self) -> ArrayView1<'_, f64> {
        self.terminal_portfolio.view()
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let d: Dataset = serde_json::from_reader(reader).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(d.states, d.actions, d.rewards, d.beta, d.thinness, d.terminal_portfolio)
    }
}

/// Packs one run's samples. `quoted` is only used to check shapes.
pub fn assemble_dataset(
    quoted: &PathMatrix,
    strategy: &StrategyMatrix,
    rewards: &RewardMatrix,
    impact: &ImpactSeries,
    states: &StateMatrix,
    portfolio: &PortfolioMatrix,
) -> Result<Dataset> {
    let dim = quoted.values().dim();
    check_shape("strategy", strategy.positions(), dim)?;
    check_shape("rewards", rewards.values(), dim)?;
    check_shape("beta", impact.beta(), dim)?;
    check_shape("states", states.values(), dim)?;
    check_shape("portfolio", portfolio.values(), dim)?;
    let steps = dim.1 - 1;
    let head = |m: &Array2<f64>| m.slice(s![.., ..steps]).to_owned();
    Dataset::new(
        states.values().clone(),
        head(strategy.positions()),
        head(rewards.values()),
        head(impact.beta()),
        head(impact.thinness()),
        portfolio.terminal().to_owned(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct ActionBounds {
    lo: f64,
    hi: f64,
}

impl ActionBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::param(
                "action_bounds",
                format!("need finite lo < hi, got [{lo}, {hi}]"),
            ));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }
}

impl Default for ActionBounds {
    fn default() -> Self {
        Self { lo: -5.0, hi: 5.0 }
    }
}

impl TryFrom<[f64; 2]> for ActionBounds {
    type Error = String;

    fn try_from([lo, hi]: [f64; 2]) -> std::result::Result<Self, String> {
        ActionBounds::new(lo, hi).map_err(|e| e.to_string())
    }
}

impl From<ActionBounds> for [f64; 2] {
    fn from(b: ActionBounds) -> Self {
        [b.lo, b.hi]
    }
}

/// Where greedy actions are searched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionDomain {
    /// The observed action range at each step, intersected with the bounds.
    #[default]
    Observed,
    /// The full action bounds at every step.
    Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub ridge: f64,
    pub action_bounds: ActionBounds,
    pub action_domain: ActionDomain,
}

impl FitConfig {
    pub fn new(params: &MarketParams, lambda: f64, ridge: f64, action_bounds: ActionBounds) -> Self {
        Self {
            gamma: params.gamma(),
            lambda,
            ridge,
            action_bounds,
            action_domain: ActionDomain::default(),
        }
    }

    pub fn with_action_domain(self, action_domain: ActionDomain) -> Self {
        Self { action_domain, ..self }
    }

    /// Search range for step `t` given the actions observed there. Falls
    /// back to the bounds when the observed range collapses to a point.
    pub fn action_range(&self, observed: ArrayView1<f64>) -> ActionBounds {
        let b = self.action_bounds;
        if self.action_domain == ActionDomain::Bounds {
            return b;
        }
        let lo = observed.iter().copied().fold(f64::INFINITY, f64::min).clamp(b.lo, b.hi);
        let hi = observed
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            .clamp(b.lo, b.hi);
        ActionBounds::new(lo, hi).unwrap_or(b)
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::param("gamma", format!("must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::param(
                "ridge",
                format!("must be finite and >= 0, got {}", self.ridge),
            ));
        }
        if !self.lambda.is_finite() {
            return Err(Error::param("lambda", "must be finite"));
        }
        Ok(())
    }
}

/// Rows `u0, u1, u2` of `U_W(t, s) = W_t Φ(s)` over a set of states.
#[derive(Debug, Clone, PartialEq)]
pub struct UwRows {
    pub u0: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

/// Maximizer of a fitted quadratic over the action bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionChoice {
    pub action: f64,
    /// False when `u2 >= 0` and an endpoint was chosen instead of the vertex.
    pub concave: bool,
}

/// `u0 + a u1 + a²/2 u2`.
pub fn quadratic_value(u: [f64; 3], a: f64) -> f64 {
    let [c0, c1, c2] = action_terms(a);
    c0 * u[0] + c1 * u[1] + c2 * u[2]
}

/// Maximizes `u0 + a u1 + a²/2 u2` over `bounds`: the clipped vertex
/// `-u1/u2` when `u2 < 0`, otherwise the better endpoint (ties go low).
pub fn maximize_quadratic(u: [f64; 3], bounds: ActionBounds) -> ActionChoice {
    if u[2] < 0.0 {
        return ActionChoice {
            action: (-u[1] / u[2]).clamp(bounds.lo, bounds.hi),
            concave: true,
        };
    }
    let (q_lo, q_hi) = (quadratic_value(u, bounds.lo), quadratic_value(u, bounds.hi));
    ActionChoice {
        action: if q_hi > q_lo { bounds.hi } else { bounds.lo },
        concave: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    weights: Vec<Array2<f64>>,
    knots: KnotVector,
    gamma: f64,
    lambda: f64,
    ridge: f64,
    action_bounds: ActionBounds,
    /// Per step, the range greedy actions are searched over.
    action_ranges: Vec<ActionBounds>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema_version: u32,
    knots: KnotVector,
    gamma: f64,
    lambda: f64,
    ridge: f64,
    action_bounds: ActionBounds,
    action_ranges: Vec<ActionBounds>,
    /// Per step, a row-major `3 x n_basis` matrix.
    weights: Vec<Vec<Vec<f64>>>,
}

impl FittedModel {
    pub fn n_steps(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, t: usize) -> &Array2<f64> {
        &self.weights[t]
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn action_bounds(&self) -> ActionBounds {
        self.action_bounds
    }

    /// Range searched for the greedy action at step `t`.
    pub fn action_range(&self, t: usize) -> ActionBounds {
        self.action_ranges[t]
    }

    /// `W_t Φ(s)` as `[u0, u1, u2]`.
    pub fn uw_at(&self, t: usize, s: f64) -> [f64; 3] {
        let mut phi = vec![0.0; self.knots.n_basis()];
        self.knots.eval_into(s, &mut phi);
        self.uw_from_basis(t, &phi)
    }

    fn uw_from_basis(&self, t: usize, phi: &[f64]) -> [f64; 3] {
        let w = &self.weights[t];
        let row = |b: usize| w.row(b).iter().zip(phi).map(|(w, p)| w * p).sum::<f64>();
        [row(0), row(1), row(2)]
    }

    pub fn uw_rows(&self, t: usize, states: &[f64]) -> UwRows {
        let mut rows = UwRows {
            u0: Vec::with_capacity(states.len()),
            u1: Vec::with_capacity(states.len()),
            u2: Vec::with_capacity(states.len()),
        };
        for &s in states {
            let [a, b, c] = self.uw_at(t, s);
            rows.u0.push(a);
            rows.u1.push(b);
            rows.u2.push(c);
        }
        rows
    }

    pub fn to_json_string(&self) -> String {
        let file = ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            knots: self.knots.clone(),
            gamma: self.gamma,
            lambda: self.lambda,
            ridge: self.ridge,
            action_bounds: self.action_bounds,
            action_ranges: self.action_ranges.clone(),
            weights: self
                .weights
                .iter()
                .map(|w| w.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model schema version {}",
                file.schema_version
            )));
        }
        let n_basis = file.knots.n_basis();
        let mut weights = Vec::with_capacity(file.weights.len());
        for (t, rows) in file.weights.into_iter().enumerate() {
            if rows.len() != 3 || rows.iter().any(|r| r.len() != n_basis) {
                return Err(Error::Parse(format!("weights[{t}] must be 3 x {n_basis}")));
            }
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            if flat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("weights[{t}] holds non-finite values")));
            }
            weights.push(Array2::from_shape_vec((3, n_basis), flat).expect("shape checked"));
        }
        if file.action_ranges.len() != weights.len() {
            return Err(Error::Parse(format!(
                "{} action ranges for {} steps",
                file.action_ranges.len(),
                weights.len()
            )));
        }
        let (b_lo, b_hi) = (file.action_bounds.lo, file.action_bounds.hi);
        if let Some(t) = file.action_ranges.iter().position(|r| r.lo < b_lo || r.hi > b_hi) {
            return Err(Error::Parse(format!("action_ranges[{t}] exceeds the action bounds")));
        }
        let model = Self {
            weights,
            knots: file.knots,
            gamma: file.gamma,
            lambda: file.lambda,
            ridge: file.ridge,
            action_bounds: file.action_bounds,
            action_ranges: file.action_ranges,
        };
        FitConfig {
            gamma: model.gamma,
            lambda: model.lambda,
            ridge: model.ridge,
            action_bounds: model.action_bounds,
            action_domain: ActionDomain::Bounds,
        }
        .validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

pub fn optimal_action(model: &FittedModel, t: usize, s: f64) -> ActionChoice {
    maximize_quadratic(model.uw_at(t, s), model.action_ranges[t])
}

pub fn optimal_q(model: &FittedModel, t: usize, s: f64, a: f64) -> f64 {
    quadratic_value(model.uw_at(t, s), a)
}

/// Per-step fit diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitReport {
    /// `‖S w - M‖ / ‖M‖` of the solved normal equations, indexed by `t`.
    pub relative_residuals: Vec<f64>,
    /// In-sample mean squared residual of the fitted weights, indexed by `t`.
    pub fitted_mse: Vec<f64>,
    /// Mean squared target (the residual of all-zero weights), indexed by `t`.
    pub zero_model_mse: Vec<f64>,
    /// Next-step maximizations that met a non-concave quadratic.
    pub concavity_violations: usize,
    pub warnings: Vec<String>,
}

pub fn fit(dataset: &Dataset, knots: &KnotVector, config: &FitConfig) -> Result<FittedModel> {
    fit_with_report(dataset, knots, config).map(|(m, _)| m)
}

pub fn fit_with_report(dataset: &Dataset, knots: &KnotVector, config: &FitConfig) -> Result<(FittedModel, FitReport)> {
    config.validate()?;
    let n = dataset.n_paths();
    if n < 2 {
        return Err(Error::TooFewPaths { n_paths: n });
    }
    let steps = dataset.n_steps();
    let nb = knots.n_basis();
    let dim = 3 * nb;
    let mut report = FitReport {
        relative_residuals: vec![0.0; steps],
        fitted_mse: vec![0.0; steps],
        zero_model_mse: vec![0.0; steps],
        ..FitReport::default()
    };
    if n < dim {
        report.warnings.push(format!(
            "{n} paths for {dim} features: normal equations rely on the ridge term"
        ));
    }

    // Φ(S_t^k) for t < T, laid out [t][k][j]
    let mut basis = vec![0.0; steps * n * nb];
    basis.par_chunks_mut(n * nb).enumerate().for_each(|(t, block)| {
        for (k, phi) in block.chunks_mut(nb).enumerate() {
            knots.eval_into(dataset.states[[k, t]], phi);
        }
    });
    let phi_at = |t: usize, k: usize| &basis[(t * n + k) * nb..(t * n + k + 1) * nb];

    let terminal = dataset.terminal_portfolio();
    let terminal_var = population_variance(terminal);
    let mut next_value: Array1<f64> = terminal.mapv(|pi| -pi - config.lambda * terminal_var);

    let action_ranges: Vec<ActionBounds> = (0..steps)
        .map(|t| config.action_range(dataset.actions.column(t)))
        .collect();
    let mut weights = vec![Array2::<f64>::zeros((3, nb)); steps];
    for t in (0..steps).rev() {
        let rewards = dataset.rewards.column(t);
        let actions = dataset.actions.column(t);
        let targets: Vec<f64> = (0..n).map(|k| rewards[k] + config.gamma * next_value[k]).collect();

        let (mut gram, rhs) =
            normal_equations(n, dim, |k, psi| psi_from_basis(phi_at(t, k), actions[k], psi), &targets);
        for i in 0..dim {
            gram[i * dim + i] += config.ridge;
        }
        let s_mat = DMatrix::from_row_slice(dim, dim, &gram);
        let m_vec = DVector::from_column_slice(&rhs);
        let chol = s_mat.clone().cholesky().ok_or(Error::SingularSystem { t })?;
        let w = chol.solve(&m_vec);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem { t });
        }
        let m_norm = m_vec.norm();
        let resid = (&s_mat * &w - &m_vec).norm();
        report.relative_residuals[t] = if m_norm > 0.0 { resid / m_norm } else { resid };

        let w_t = Array2::from_shape_vec((3, nb), w.iter().copied().collect()).expect("3 x n_basis");
        let mut sq_fit = 0.0;
        let mut sq_zero = 0.0;
        let mut psi = vec![0.0; dim];
        for k in 0..n {
            psi_from_basis(phi_at(t, k), actions[k], &mut psi);
            let q: f64 = psi.iter().zip(w.iter()).map(|(p, w)| p * w).sum();
            sq_fit += (targets[k] - q).powi(2);
            sq_zero += targets[k].powi(2);
        }
        report.fitted_mse[t] = sq_fit / n as f64;
        report.zero_model_mse[t] = sq_zero / n as f64;
        weights[t] = w_t;

        if t > 0 {
            let w_ref = &weights[t];
            let mut violations = 0;
            for k in 0..n {
                let phi = phi_at(t, k);
                let row = |b: usize| w_ref.row(b).iter().zip(phi).map(|(w, p)| w * p).sum::<f64>();
                let u = [row(0), row(1), row(2)];
                let choice = maximize_quadratic(u, action_ranges[t]);
                violations += usize::from(!choice.concave);
                next_value[k] = quadratic_value(u, choice.action);
            }
            report.concavity_violations += violations;
        }
    }

    let model = FittedModel {
        weights,
        knots: knots.clone(),
        gamma: config.gamma,
        lambda: config.lambda,
        ridge: config.ridge,
        action_bounds: config.action_bounds,
        action_ranges,
    };
    Ok((model, report))
}

/// Accumulates `Σ ψ_k ψ_kᵀ` (row-major, full) and `Σ ψ_k y_k` over `n`
/// samples with a fixed block partition and a fixed pairwise combine order.
fn normal_equations<F>(n: usize, dim: usize, fill_psi: F, targets: &[f64]) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let n_blocks = n.div_ceil(REDUCTION_BLOCK);
    let mut partials: Vec<(Vec<f64>, Vec<f64>)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut gram = vec![0.0; dim * dim];
            let mut rhs = vec![0.0; dim];
            let mut psi = vec![0.0; dim];
            for k in b * REDUCTION_BLOCK..((b + 1) * REDUCTION_BLOCK).min(n) {
                fill_psi(k, &mut psi);
                for i in 0..dim {
                    let pi = psi[i];
                    if pi == 0.0 {
                        continue;
                    }
                    rhs[i] += pi * targets[k];
                    let row = &mut gram[i * dim..(i + 1) * dim];
                    for j in i..dim {
                        row[j] += pi * psi[j];
                    }
                }
            }
            (gram, rhs)
        })
        .collect();

    while partials.len() > 1 {
        let mut next = Vec::with_capacity(partials.len().div_ceil(2));
        let mut it = partials.into_iter();
        while let Some((mut g, mut r)) = it.next() {
            if let Some((g2, r2)) = it.next() {
                g.iter_mut().zip(&g2).for_each(|(a, b)| *a += b);
                r.iter_mut().zip(&r2).for_each(|(a, b)| *a += b);
            }
            next.push((g, r));
        }
        partials = next;
    }
    let (mut gram, rhs) = partials.pop().unwrap_or_else(|| (vec![0.0; dim * dim], vec![0.0; dim]));
    for i in 0..dim {
        for j in 0..i {
            gram[i * dim + j] = gram[j * dim + i];
        }
    }
    (gram, rhs)
}

/// Price from the terminal Q values, `mean_k(-e^{-r_d τ} Q_T^k)` with
/// `Q_T = -Π_T - λ Var[Π_T]`.
pub fn qlbs_price(terminal_portfolio: ArrayView1<f64>, params: &MarketParams, lambda: f64) -> Result<f64> {
    let n_paths = terminal_portfolio.len();
    if n_paths < 2 {
        return Err(Error::TooFewPaths { n_paths });
    }
    let var = population_variance(terminal_portfolio);
    let discount = (-params.r_d * params.tau).exp();
    let neg_q = terminal_portfolio.mapv(|pi| -discount * (-pi - lambda * var));
    Ok(mean(neg_q.view()))
}

/// Greedy actions `a*_t(S_t)` on the given states with `a*_T = 0`, and the
/// number of non-concave evaluations.
pub fn optimal_strategy(model: &FittedModel, states: &StateMatrix) -> Result<(StrategyMatrix, usize)> {
    let s = states.values();
    let steps = model.n_steps();
    if s.ncols() != steps + 1 {
        return Err(Error::ShapeMismatch {
            what: "states".into(),
            expected: (s.nrows(), steps + 1),
            found: s.dim(),
        });
    }
    let mut positions = Array2::<f64>::zeros(s.dim());
    let violations: usize = positions
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(s.axis_iter(Axis(0)))
        .map(|(mut row, states)| {
            let mut v = 0;
            for t in 0..steps {
                let choice = optimal_action(model, t, states[t]);
                row[t] = choice.action;
                v += usize::from(!choice.concave);
            }
            v
        })
        .sum();
    Ok((StrategyMatrix::new(positions, StrategyKind::Optimal)?, violations))
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub implied: PathMatrix,
    pub optimal: StrategyMatrix,
    pub concavity_violations: usize,
}

/// Optimal actions on the quoted states, replayed through the order book
/// of the same run to obtain the implied rates.
pub fn implied_rollout(
    model: &FittedModel,
    unaffected: &PathMatrix,
    impact: &ImpactSeries,
    quoted_states: &StateMatrix,
) -> Result<Rollout> {
    let (optimal, concavity_violations) = optimal_strategy(model, quoted_states)?;
    let implied = propagate_impact(unaffected, &optimal, impact)?;
    Ok(Rollout {
        implied,
        optimal,
        concavity_violations,
    })
}

/// Non-normative diagnostic: `mean_k -Q_0(S_0^k, a*_0)`.
pub fn initial_value_price(model: &FittedModel, states: &StateMatrix) -> f64 {
    let s0 = states.values().column(0);
    let total: f64 = s0
        .iter()
        .map(|&s| {
            let u = model.uw_at(0, s);
            -quadratic_value(u, maximize_quadratic(u, model.action_ranges[0]).action)
        })
        .sum();
    total / s0.len() as f64
}

//! Clamped B-spline state basis and the joint state-action features.
//!
//! The Q-function at each step is `Q(s, a) = Aᵀ W Φ(s)` with
//! `A = [1, a, a²/2]`, `W` of shape `3 x n_basis` and `Φ` the B-spline basis.
//! Flattening `W` row-major gives `Q = w · ψ(s, a)` where block `b` of `ψ`
//! holds `A_b Φ(s)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::StateMatrix;

pub const DEFAULT_N_BASIS: usize = 12;
pub const DEFAULT_DEGREE: usize = 3;
/// Half-width of the pad applied when all observed states coincide.
pub const DEGENERATE_PAD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KnotVectorRepr")]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
    n_basis: usize,
}

#[derive(Deserialize)]
struct KnotVectorRepr {
    knots: Vec<f64>,
    degree: usize,
    n_basis: usize,
}

impl TryFrom<KnotVectorRepr> for KnotVector {
    type Error = Error;

    fn try_from(r: KnotVectorRepr) -> Result<Self> {
        let kv = KnotVector::new(r.knots, r.degree)?;
        if kv.n_basis != r.n_basis {
            return Err(Error::param(
                "knots.n_basis",
                format!("{} inconsistent with knot count", r.n_basis),
            ));
        }
        Ok(kv)
    }
}

impl KnotVector {
    /// Validates a clamped knot vector: nondecreasing, end knots repeated
    /// `degree + 1` times, interior knots strictly increasing.
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::param("degree", "must be at least 1"));
        }
        if knots.len() < 2 * (degree + 1) {
            return Err(Error::param(
                "knots",
                format!("need at least {} knots", 2 * (degree + 1)),
            ));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::param("knots", "must be finite"));
        }
        let n = knots.len();
        let (lo, hi) = (knots[0], knots[n - 1]);
        if !(lo < hi) {
            return Err(Error::param("knots", "span must have positive width"));
        }
        let clamped = knots[..=degree].iter().all(|&k| k == lo) && knots[n - degree - 1..].iter().all(|&k| k == hi);
        if !clamped {
            return Err(Error::param(
                "knots",
                format!("end knots must repeat {} times", degree + 1),
            ));
        }
        let interior = &knots[degree..n - degree];
        if interior.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::param("knots", "interior knots must be strictly increasing"));
        }
        Ok(Self {
            n_basis: n - degree - 1,
            knots,
            degree,
        })
    }

    /// Clamped knots with `n_basis - degree` equal intervals over `[lo, hi]`.
    pub fn clamped_uniform(lo: f64, hi: f64, n_basis: usize, degree: usize) -> Result<Self> {
        if n_basis <= degree {
            return Err(Error::param(
                "n_basis",
                format!("must exceed degree {degree}, got {n_basis}"),
            ));
        }
        let intervals = n_basis - degree;
        let width = hi - lo;
        let mut knots = vec![lo; degree + 1];
        knots.extend((1..intervals).map(|i| lo + width * i as f64 / intervals as f64));
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Self::new(knots, degree)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn span(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn clamp(&self, s: f64) -> f64 {
        let (lo, hi) = self.span();
        s.clamp(lo, hi)
    }

    /// Knot interval index `i` with `knots[i] <= s < knots[i+1]`, the last
    /// nonempty interval for the right end.
    fn find_interval(&self, s: f64) -> usize {
        let last = self.n_basis - 1;
        if s >= self.knots[last + 1] {
            return last;
        }
        let (mut lo, mut hi) = (self.degree, last + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if s < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Writes `Φ(s)` into `out` (length `n_basis`). `s` is clamped into the
    /// knot span first.
    pub fn eval_into(&self, s: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_basis);
        let s = self.clamp(s);
        let p = self.degree;
        let span = self.find_interval(s);
        // de Boor triangle on the p+1 nonzero functions
        let mut n = [0.0f64; 16];
        let mut left = [0.0f64; 16];
        let mut right = [0.0f64; 16];
        assert!(p < 16, "degree above 15 unsupported");
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = s - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - s;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        out.fill(0.0);
        out[span - p..=span].copy_from_slice(&n[..=p]);
    }
}

/// Clamped uniform knots over the global range of all observed states.
pub fn build_knots(states: &StateMatrix, n_basis: usize, degree: usize) -> Result<KnotVector> {
    let values = states.values();
    if values.is_empty() {
        return Err(Error::param("states", "no states to place knots on"));
    }
    if let Some(((path, time), &value)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteState { path, time, value });
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - DEGENERATE_PAD, hi + DEGENERATE_PAD)
    };
    KnotVector::clamped_uniform(lo, hi, n_basis, degree)
}

pub fn eval_basis(knots: &KnotVector, s: f64) -> Vec<f64> {
    let mut out = vec![0.0; knots.n_basis()];
    knots.eval_into(s, &mut out);
    out
}

/// Action multipliers `[1, a, a²/2]`.
pub fn action_terms(a: f64) -> [f64; 3] {
    [1.0, a, 0.5 * a * a]
}

/// Fills `out` (length `3 n_basis`) with `ψ(s, a)` given a precomputed `Φ(s)`.
pub fn psi_from_basis(phi: &[f64], a: f64, out: &mut [f64]) {
    let n = phi.len();
    debug_assert_eq!(out.len(), 3 * n);
    for (b, scale) in action_terms(a).into_iter().enumerate() {
        for (o, &p) in out[b * n..(b + 1) * n].iter_mut().zip(phi) {
            *o = scale * p;
        }
    }
}

pub fn psi(s: f64, a: f64, knots: &KnotVector) -> Vec<f64> {
    let phi = eval_basis(knots, s);
    let mut out = vec![0.0; 3 * phi.len()];
    psi_from_basis(&phi, a, &mut out);
    out
}

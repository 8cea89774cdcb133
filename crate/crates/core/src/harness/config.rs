use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DEFAULT_DEGREE, DEFAULT_N_BASIS};
use crate::fqi::{ActionBounds, ActionDomain};
use crate::market::MarketParams;
use crate::rng::UniformRange;

/// Environment variable overriding the configured root seed.
pub const SEED_ENV: &str = "IMPACT_QLBS_SEED";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnNonPositive {
    /// Abort the run.
    #[default]
    Error,
    /// Remove offending paths and count them.
    DropPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub market: MarketParams,
    pub strategy_range: UniformRange,
    pub m_range: UniformRange,
    pub beta_range: UniformRange,
    pub kappa: f64,
    pub lambda: f64,
    pub n_basis: usize,
    pub degree: usize,
    pub ridge: f64,
    pub action_bounds: ActionBounds,
    pub action_domain: ActionDomain,
    pub n_runs: usize,
    pub seed: u64,
    pub on_nonpositive: OnNonPositive,
    pub share_across_paths: bool,
    pub output_dir: PathBuf,
    /// Paths of the first run written to `paths_sample.csv`.
    pub sample_paths: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let range = |lo, hi| UniformRange::new(lo, hi).expect("static range");
        Self {
            market: MarketParams::default(),
            strategy_range: range(-1.0, 1.0),
            m_range: range(0.01, 0.03),
            beta_range: range(0.0, 1.0),
            kappa: 0.01,
            lambda: 0.001,
            n_basis: DEFAULT_N_BASIS,
            degree: DEFAULT_DEGREE,
            ridge: 1e-3,
            action_bounds: ActionBounds::default(),
            action_domain: ActionDomain::default(),
            n_runs: 50,
            seed: 42,
            on_nonpositive: OnNonPositive::Error,
            share_across_paths: false,
            output_dir: PathBuf::from("out"),
            sample_paths: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        if self.market.n_mc < 2 {
            return Err(Error::param(
                "market.n_mc",
                "cross-sectional rewards need at least 2 paths",
            ));
        }
        if !(self.m_range.lo() > 0.0) {
            return Err(Error::param(
                "m_range",
                format!("lower bound must be > 0, got {}", self.m_range.lo()),
            ));
        }
        let (b_lo, b_hi) = (self.beta_range.lo(), self.beta_range.hi());
        if !(b_lo >= 0.0 && b_hi <= 1.0 && (b_lo < b_hi || b_lo < 1.0)) {
            return Err(Error::param(
                "beta_range",
                format!("need 0 <= lo <= hi <= 1 with draws below 1, got [{b_lo}, {b_hi})"),
            ));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::param("kappa", "must be finite and >= 0"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda", "must be finite and >= 0"));
        }
        if self.degree == 0 || self.n_basis <= self.degree {
            return Err(Error::param(
                "n_basis",
                format!("need n_basis > degree >= 1, got {} and {}", self.n_basis, self.degree),
            ));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::param("ridge", "must be finite and >= 0"));
        }
        if self.n_runs < 1 {
            return Err(Error::param("n_runs", "need at least one run"));
        }
        Ok(())
    }

    /// Parses JSON, reporting the offending field path on failure.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::param(
                if path.is_empty() { ".".to_string() } else { path },
                e.into_inner().to_string(),
            )
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Applies `IMPACT_QLBS_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = raw
                .trim()
                .parse()
                .map_err(|_| Error::param(SEED_ENV, format!("`{raw}` is not an unsigned 64-bit integer")))?;
        }
        Ok(())
    }
}

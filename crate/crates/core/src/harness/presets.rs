//! Experiment sweeps behind the published result tables.
//!
//! Every row shares the base seed, so rows of one table see the same
//! unaffected paths.

use std::fmt;
use std::str::FromStr;

use crate::harness::ExperimentConfig;
use crate::rng::UniformRange;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    /// Thinness sweep, `u ∈ [-1, 1)`.
    Table2,
    /// Thinness sweep, `u ∈ [-1.5, 1.5)`.
    Table3,
    /// Strategy-range sweep over counter-intuitive ranges; thinness from the
    /// base config.
    Table4,
    /// Impact-parameter sweep with `M ∈ [0.01, 0.03)`; the strategy range
    /// comes from the base config (default `[-1, 1)`).
    Table5,
}

impl Table {
    pub const ALL: [Table; 4] = [Table::Table2, Table::Table3, Table::Table4, Table::Table5];

    pub fn name(self) -> &'static str {
        match self {
            Table::Table2 => "table2",
            Table::Table3 => "table3",
            Table::Table4 => "table4",
            Table::Table5 => "table5",
        }
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Table {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Table::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown table `{s}`"))
    }
}

pub const THINNESS_SWEEP: [(f64, f64); 4] = [(0.01, 0.03), (0.03, 0.07), (0.07, 0.10), (0.01, 0.10)];
pub const STRATEGY_SWEEP: [(f64, f64); 4] = [(-2.0, 2.0), (-2.0, 0.0), (0.0, 2.0), (-5.0, 5.0)];
pub const BETA_SWEEP: [(f64, f64); 2] = [(0.0, 0.4), (0.7, 1.0)];

#[derive(Debug, Clone)]
pub struct PresetRow {
    pub label: String,
    pub config: ExperimentConfig,
}

fn range((lo, hi): (f64, f64)) -> UniformRange {
    UniformRange::new(lo, hi).expect("preset ranges are valid")
}

fn label(prefix: &str, (lo, hi): (f64, f64)) -> String {
    format!("{prefix}_{lo}_{hi}")
}

/// Rows of `table`, built on top of `base` (market inputs, run count, seed
/// and fitting options carry over).
pub fn table_rows(table: Table, base: &ExperimentConfig) -> Vec<PresetRow> {
    let with = |label: String, edit: &dyn Fn(&mut ExperimentConfig)| {
        let mut config = base.clone();
        edit(&mut config);
        PresetRow { label, config }
    };
    match table {
        Table::Table2 | Table::Table3 => {
            let u = if table == Table::Table2 {
                (-1.0, 1.0)
            } else {
                (-1.5, 1.5)
            };
            THINNESS_SWEEP
                .iter()
                .map(|&m| {
                    with(label("m", m), &|c| {
                        c.strategy_range = range(u);
                        c.m_range = range(m);
                        c.beta_range = range((0.0, 1.0));
                    })
                })
                .collect()
        }
        Table::Table4 => STRATEGY_SWEEP
            .iter()
            .map(|&u| {
                with(label("u", u), &|c| {
                    c.strategy_range = range(u);
                    c.beta_range = range((0.0, 1.0));
                })
            })
            .collect(),
        Table::Table5 => BETA_SWEEP
            .iter()
            .map(|&b| {
                with(label("beta", b), &|c| {
                    c.m_range = range((0.01, 0.03));
                    c.beta_range = range(b);
                })
            })
            .collect(),
    }
}

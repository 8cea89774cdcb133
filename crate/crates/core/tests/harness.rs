mod common;

use approx::assert_abs_diff_eq;
use ndarray::Array2;

use impact_qlbs::harness::presets::{table_rows, Table};
use impact_qlbs::harness::validate::{run_invariant_suite, tiny_config};
use impact_qlbs::harness::{
    emit_report, run_batch, run_experiment, write_summary, BatchOptions, ExperimentConfig, OnNonPositive, REPORT_FILES,
};
use impact_qlbs::market::{simulate_unaffected, MarketParams, PathMatrix, RateKind};
use impact_qlbs::rng::UniformRange;
use impact_qlbs::Error;

fn range(lo: f64, hi: f64) -> UniformRange {
    UniformRange::new(lo, hi).unwrap()
}

#[test]
fn invariant_suite_passes() {
    for seed in [1, 7, 99] {
        for check in run_invariant_suite(seed).unwrap() {
            assert!(check.passed, "seed {seed}: {} {}", check.name, check.detail);
        }
    }
}

#[test]
fn deterministic_market_prices_in_closed_form() {
    let config = ExperimentConfig {
        market: MarketParams {
            sigma: 0.0,
            n_mc: 20,
            ..MarketParams::default()
        },
        strategy_range: range(0.0, 0.0),
        beta_range: range(0.0, 0.0),
        lambda: 0.0,
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&config, 3).unwrap();
    let want = common::closed_form_put();
    assert_abs_diff_eq!(report.fair_price, want, epsilon = 1e-10);
    assert_abs_diff_eq!(report.qlbs_price, want, epsilon = 1e-10);
    assert_eq!(report.squared_error, report.squared_error.abs());
    assert!(report.squared_error <= 1e-20);
    assert_eq!(report.mean_cost_postulated, 0.0);
}

#[test]
fn seed_isolation() {
    let mut config = tiny_config();
    config.n_runs = 10;
    let short = run_batch(&config, BatchOptions::default()).unwrap();
    config.n_runs = 50;
    let long = run_batch(&config, BatchOptions::default()).unwrap();
    assert_eq!(&long.runs[..10], &short.runs[..]);
    assert_eq!(long.runs.len(), 50);
    assert!(long.runs.iter().enumerate().all(|(i, r)| r.run == i));
}

#[test]
fn premium_identity_per_run() {
    let mut config = tiny_config();
    config.n_runs = 8;
    let batch = run_batch(&config, BatchOptions::default()).unwrap();
    let discount = (-config.market.r_d * config.market.tau).exp();
    for r in &batch.runs {
        let premium = discount * config.lambda * r.terminal_variance;
        assert!(((r.qlbs_price - r.fair_price) - premium).abs() <= 1e-12 * r.qlbs_price.abs());
        assert!(r.qlbs_price >= r.fair_price);
    }
}

#[test]
fn report_files_agree_with_aggregates() {
    let mut config = tiny_config();
    config.n_runs = 6;
    config.sample_paths = 3;
    let batch = run_batch(&config, BatchOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(&batch, dir.path()).unwrap();
    assert_eq!(written.len(), REPORT_FILES.len());
    for name in REPORT_FILES {
        assert!(dir.path().join(name).is_file(), "{name}");
    }

    let mut reader = csv::Reader::from_path(dir.path().join("runs.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["run", "seed", "fair", "qlbs", "sq_err", "Lp", "Lstar"]
    );
    let rows: Vec<Vec<f64>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    let avg = |col: usize| rows.iter().map(|r| r[col]).sum::<f64>() / rows.len() as f64;
    assert!((avg(4) - batch.mse).abs() <= 1e-12);
    assert!((avg(5) - batch.avg_lp).abs() <= 1e-12);
    assert!((avg(6) - batch.avg_lstar).abs() <= 1e-12);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 6);
    assert!(report.get("wall_time_secs").is_none());
    let parsed: ExperimentConfig = serde_json::from_value(report["config"].clone()).unwrap();
    assert_eq!(parsed, config);

    let paths = std::fs::read_to_string(dir.path().join("paths_sample.csv")).unwrap();
    let steps = config.market.steps + 1;
    assert_eq!(paths.lines().count(), 1 + 3 * 3 * steps);
    for kind in ["unaffected", "quoted", "implied"] {
        assert_eq!(paths.lines().filter(|l| l.contains(kind)).count(), 3 * steps);
    }

    let summary = write_summary(&[("row".to_string(), batch)], dir.path()).unwrap();
    let text = std::fs::read_to_string(summary).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn path_csv_round_trip_is_exact() {
    let params = MarketParams {
        n_mc: 7,
        ..MarketParams::default()
    };
    let paths = simulate_unaffected(&params, 5).unwrap();
    let mut buf = Vec::new();
    paths.write_csv(&mut buf).unwrap();
    let back = PathMatrix::read_csv(buf.as_slice(), RateKind::Unaffected).unwrap();
    assert_eq!(back, paths);
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("path,t0,t1,"));

    let bad = "path,t0,t1\n0,1.0,x\n";
    assert!(PathMatrix::read_csv(bad.as_bytes(), RateKind::Unaffected).is_err());
    let negative = "path,t0,t1\n0,1.0,-1.0\n";
    assert!(PathMatrix::read_csv(negative.as_bytes(), RateKind::Unaffected).is_err());
    assert!(PathMatrix::new(Array2::from_elem((1, 2), 0.0), RateKind::Quoted).is_err());
}

fn fragile_config() -> ExperimentConfig {
    let mut config = tiny_config();
    config.market.f0 = 0.05;
    config.market.f_prev = 0.05;
    config.market.strike = 0.06;
    config.m_range = range(0.2, 0.3);
    config.n_runs = 3;
    config
}

#[test]
fn nonpositive_rates_fail_or_drop() {
    let config = fragile_config();
    match run_batch(&config, BatchOptions::default()) {
        Err(Error::Run { run: 0, source, .. }) => assert!(matches!(*source, Error::NonPositiveRate { .. })),
        other => panic!("expected a failed run, got {other:?}"),
    }
    match run_batch(&config, BatchOptions { skip_failed: true }) {
        Err(Error::AllRunsFailed { count: 3, .. }) => {}
        other => panic!("expected all runs to fail, got {other:?}"),
    }

    let mut dropping = config.clone();
    dropping.on_nonpositive = OnNonPositive::DropPath;
    dropping.market.n_mc = 400;
    let batch = run_batch(&dropping, BatchOptions::default()).unwrap();
    for r in &batch.runs {
        assert!(r.dropped_paths > 0 && r.dropped_paths < 400);
        assert!(r.fair_price.is_finite() && r.mean_cost_optimal.is_finite());
    }
}

#[test]
fn preset_rows() {
    let base = ExperimentConfig::default();
    let t2 = table_rows(Table::Table2, &base);
    let labels: Vec<&str> = t2.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["m_0.01_0.03", "m_0.03_0.07", "m_0.07_0.1", "m_0.01_0.1"]);
    for row in &t2 {
        assert_eq!(row.config.market, MarketParams::default());
        assert_eq!(
            (row.config.strategy_range.lo(), row.config.strategy_range.hi()),
            (-1.0, 1.0)
        );
    }
    let t3 = table_rows(Table::Table3, &base);
    assert!(t3.iter().all(|r| r.config.strategy_range.hi() == 1.5));
    let t4 = table_rows(Table::Table4, &base);
    let u: Vec<(f64, f64)> = t4
        .iter()
        .map(|r| (r.config.strategy_range.lo(), r.config.strategy_range.hi()))
        .collect();
    assert_eq!(u, [(-2.0, 2.0), (-2.0, 0.0), (0.0, 2.0), (-5.0, 5.0)]);
    let t5 = table_rows(Table::Table5, &base);
    assert_eq!(t5.len(), 2);
    assert!(t5
        .iter()
        .all(|r| r.config.strategy_range.hi() == 1.0 && r.config.m_range.lo() == 0.01));
}

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::BatchReport;
use crate::numfmt::decimal;

/// Files written by [`emit_report`], in order.
pub const REPORT_FILES: [&str; 5] = [
    "report.json",
    "runs.csv",
    "costs.csv",
    "paths_sample.csv",
    "timing.json",
];

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes the batch report and plot data into `dir`, creating it if needed.
/// Everything except `timing.json` is a pure function of the config.
pub fn emit_report(report: &BatchReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let mut json = serde_json::to_string_pretty(report).map_err(|e| Error::Parse(e.to_string()))?;
    json.push('\n');
    written.push(write_file(dir, "report.json", json.as_bytes())?);

    let mut runs = String::from("run,seed,fair,qlbs,sq_err,Lp,Lstar\n");
    let mut costs = String::from("run,Lp,Lstar\n");
    for r in &report.runs {
        runs.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.run,
            r.seed_used,
            decimal(r.fair_price),
            decimal(r.qlbs_price),
            decimal(r.squared_error),
            decimal(r.mean_cost_postulated),
            decimal(r.mean_cost_optimal)
        ));
        costs.push_str(&format!(
            "{},{},{}\n",
            r.run,
            decimal(r.mean_cost_postulated),
            decimal(r.mean_cost_optimal)
        ));
    }
    written.push(write_file(dir, "runs.csv", runs.as_bytes())?);
    written.push(write_file(dir, "costs.csv", costs.as_bytes())?);

    let mut paths = Vec::new();
    writeln!(paths, "path,t,kind,rate").expect("in-memory write");
    if let Some(trace) = &report.sample {
        let sampled = trace.implied_paths.iter().enumerate().take(report.config.sample_paths);
        for (row, &k) in sampled {
            let series = [
                ("unaffected", trace.unaffected.values().row(k)),
                ("quoted", trace.quoted.values().row(k)),
                ("implied", trace.implied.values().row(row)),
            ];
            for (kind, rates) in series {
                for (t, rate) in rates.iter().enumerate() {
                    writeln!(paths, "{k},{t},{kind},{}", decimal(*rate)).expect("in-memory write");
                }
            }
        }
    }
    written.push(write_file(dir, "paths_sample.csv", &paths)?);

    let timing = format!("{{\n  \"wall_time_secs\": {}\n}}\n", report.wall_time_secs);
    written.push(write_file(dir, "timing.json", timing.as_bytes())?);
    Ok(written)
}

/// One line per table row: `row,n_runs,mse,avg_Lp,avg_Lstar`.
pub fn write_summary(rows: &[(String, BatchReport)], dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = String::from("row,n_runs,mse,avg_Lp,avg_Lstar\n");
    for (label, b) in rows {
        out.push_str(&format!(
            "{label},{},{},{},{}\n",
            b.runs.len(),
            decimal(b.mse),
            decimal(b.avg_lp),
            decimal(b.avg_lstar)
        ));
    }
    write_file(dir, "summary.csv", out.as_bytes())
}

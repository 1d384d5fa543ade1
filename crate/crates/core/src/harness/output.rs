use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::aggregate::AggregateRow;
use super::config::ExperimentConfig;
use super::run::{ExperimentOutcome, RunFailure, RunResult, SweepOutcome, SweepRow};
use crate::error::{Error, Result};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const SWEEP_FILE: &str = "sweep_m.csv";

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_results(path: &Path, results: &[RunResult]) -> Result<()> {
    write_jsonl(path, results)
}

pub fn read_results(path: &Path) -> Result<Vec<RunResult>> {
    read_jsonl(path)
}

pub fn write_failures(path: &Path, failures: &[RunFailure]) -> Result<()> {
    write_jsonl(path, failures)
}

#[derive(Serialize)]
struct CsvAggregate<'a> {
    method: &'a str,
    metric: &'a str,
    domain: &'a str,
    mean: f64,
    std: f64,
    n: usize,
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(CsvAggregate {
            method: &r.method,
            metric: r.metric.name(),
            domain: r.domain.name(),
            mean: r.mean,
            std: r.std,
            n: r.n,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings(path: &Path, results: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "run", "seconds"])?;
    for r in results {
        w.write_record([r.method.clone(), r.run.to_string(), format!("{:.3}", r.wall_clock_seconds)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Writes config, per-run results, failures, the aggregate table and timings
/// into `dir`. Everything but the timings is a function of config and seed.
pub fn write_experiment(dir: &Path, config: &ExperimentConfig, outcome: &ExperimentOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(config)?)?;
    write_results(&dir.join(RESULTS_FILE), &outcome.results)?;
    write_failures(&dir.join(FAILURES_FILE), &outcome.failures)?;
    write_aggregate(&dir.join(AGGREGATE_FILE), &outcome.aggregate())?;
    write_timings(&dir.join(TIMINGS_FILE), &outcome.results)
}

/// Per-m experiment directories `m_<value>/` plus the long-format sweep table.
pub fn write_sweep_outputs(dir: &Path, config: &ExperimentConfig, sweep: &SweepOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (m, outcome) in &sweep.per_m {
        let mut cfg = config.clone();
        cfg.missingness.m = *m;
        write_experiment(&dir.join(format!("m_{m}")), &cfg, outcome)?;
    }
    write_sweep(&dir.join(SWEEP_FILE), &sweep.rows)
}

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate, AggregateRow};
use super::config::{DataSource, ExperimentConfig, Method};
use super::cv::{cross_validate, fit_method, Selection};
use super::seeds::derive_seed;
use crate::datagen::{apply_missingness, generate, load_csv, split, Dataset, MissingnessSpec, DEFAULT_FRACTIONS};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::mtrnet::MTRNetConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: String,
    pub run: usize,
    pub seed: u64,
    /// Chosen network settings; `None` for OLS.
    pub hyperparameters: Option<MTRNetConfig>,
    pub selection: Selection,
    pub validation_score: f64,
    pub report: EvalReport,
    /// Kept out of result files so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub method: String,
    pub run: usize,
    pub kind: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentOutcome {
    pub results: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
}

impl ExperimentOutcome {
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        aggregate(&self.results)
    }

    pub fn result(&self, method: &str, run: usize) -> Option<&RunResult> {
        self.results.iter().find(|r| r.method == method && r.run == run)
    }
}

/// Train / validation / test splits for one run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Restores every known treatment so missingness can be drawn afresh.
/// Data with missing treatments and no retained truth is returned as is.
fn unmask(data: &Dataset) -> Option<Dataset> {
    if data.r.iter().all(|&r| r) {
        return Some(data.clone());
    }
    let tt = data.t_true.as_ref()?;
    let mut out = data.clone();
    out.t = tt.iter().map(|&t| Some(t)).collect();
    out.r = vec![true; out.n()];
    Some(out)
}

/// Regenerates (synthetic) or re-masks (CSV) the data for `run` and splits it.
pub fn prepare_run(config: &ExperimentConfig, run: usize, csv: Option<&Dataset>) -> Result<RunData> {
    let master = config.seed;
    let run_u = run as u64;
    let fresh = |d: &Dataset| -> Result<Dataset> {
        apply_missingness(
            d,
            &MissingnessSpec {
                m: config.missingness.m,
                q: config.missingness.q,
                seed: derive_seed(master, run_u, "missingness"),
            },
        )
    };
    let masked = match &config.data {
        DataSource::Synthetic { spec } => {
            let mut spec = spec.clone();
            spec.seed = derive_seed(master, run_u, "data");
            fresh(&generate(&spec)?)?
        }
        DataSource::Csv { path } => {
            let loaded;
            let source = match csv {
                Some(d) => d,
                None => {
                    loaded = load_csv(path)?;
                    &loaded
                }
            };
            match unmask(source) {
                Some(full) => fresh(&full)?,
                None => source.clone(),
            }
        }
    };
    let (train, val, test) = split(&masked, DEFAULT_FRACTIONS, derive_seed(master, run_u, "split"))?;
    Ok(RunData { train, val, test })
}

/// Cross-validates on train/val, retrains on their union and evaluates on test.
pub fn run_method(config: &ExperimentConfig, method: Method, run: usize, data: &RunData) -> Result<RunResult> {
    let start = Instant::now();
    let name = method.name();
    let seed = derive_seed(config.seed, run as u64, &name);
    let grid: Vec<MTRNetConfig> = config
        .grid_for(method)
        .into_iter()
        .map(|c| MTRNetConfig { seed, ..c })
        .collect();
    let cv = cross_validate(&data.train, &data.val, method, &grid, &config.classifier)?;
    let fit_data = data.train.concat(&data.val)?;
    let model = fit_method(method, &fit_data, &cv.config, &config.classifier)?;
    let tau_hat = model.predict_cate(&data.test.x)?;
    let mut report = evaluate(&data.test, &tau_hat, &name, seed)?;
    report.m = Some(config.missingness.m);
    report.q = Some(config.missingness.q);
    if !config.metrics.is_empty() {
        report.metrics.retain(|m, _| config.metrics.contains(m));
    }
    Ok(RunResult {
        method: name,
        run,
        seed,
        hyperparameters: method.is_network().then_some(cv.config),
        selection: cv.selection,
        validation_score: cv.scores[cv.index].unwrap_or(f64::NAN),
        report,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Every (run, method) pair on the current rayon pool. Results come back in
/// run-major, method-list order regardless of scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let csv = match &config.data {
        DataSource::Csv { path } => Some(load_csv(path)?),
        DataSource::Synthetic { .. } => None,
    };
    let prepared: Vec<std::result::Result<RunData, Error>> = (0..config.num_runs)
        .into_par_iter()
        .map(|run| prepare_run(config, run, csv.as_ref()))
        .collect();

    let jobs: Vec<(usize, Method)> = (0..config.num_runs)
        .flat_map(|run| config.methods.iter().map(move |&m| (run, m)))
        .collect();
    let outcomes: Vec<std::result::Result<RunResult, RunFailure>> = jobs
        .par_iter()
        .map(|&(run, method)| {
            let fail = |e: &Error| RunFailure {
                method: method.name(),
                run,
                kind: e.kind().to_string(),
                error: e.to_string(),
            };
            match &prepared[run] {
                Ok(data) => run_method(config, method, run, data).map_err(|e| fail(&e)),
                Err(e) => Err(fail(e)),
            }
        })
        .collect();

    let mut out = ExperimentOutcome::default();
    for o in outcomes {
        match o {
            Ok(r) => out.results.push(r),
            Err(f) => out.failures.push(f),
        }
    }
    let total = jobs.len();
    if 2 * out.failures.len() >= total {
        return Err(Error::ExperimentFailed {
            failed: out.failures.len(),
            total,
        });
    }
    Ok(out)
}

/// Runs `f` on a pool of `jobs` threads, or the global pool when `None`.
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub m: f64,
    pub metric: String,
    pub domain: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub per_m: Vec<(f64, ExperimentOutcome)>,
}

/// One experiment per missing fraction with `q` and the master seed fixed.
pub fn sweep_m(config: &ExperimentConfig, m_values: &[f64]) -> Result<SweepOutcome> {
    if m_values.is_empty() {
        return Err(Error::invalid("no m values to sweep"));
    }
    if let Some(m) = m_values.iter().find(|m| !(**m > 0.0 && **m < 1.0)) {
        return Err(Error::invalid(format!("m = {m} outside (0, 1)")));
    }
    let mut out = SweepOutcome::default();
    for &m in m_values {
        let mut cfg = config.clone();
        cfg.missingness.m = m;
        let outcome = run_experiment(&cfg)?;
        for row in outcome.aggregate() {
            out.rows.push(SweepRow {
                method: row.method,
                m,
                metric: row.metric.name().to_string(),
                domain: row.domain.name().to_string(),
                mean: row.mean,
                std: row.std,
                n: row.n,
            });
        }
        out.per_m.push((m, outcome));
    }
    Ok(out)
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use clap::{Parser, Subcommand};
use mtrnet::baselines::CateModel;
use mtrnet::datagen::{apply_missingness, generate, load_csv, save_csv, MissingnessSpec, SyntheticDgpSpec};
use mtrnet::harness::{
    aggregate, cross_validate, fit_method, format_table, output, run_experiment, sweep_m, with_jobs,
    ExperimentConfig, HyperGrid, Method, MissingnessConfig, Preset,
};
use mtrnet::metrics::evaluate;
use mtrnet::mtrnet::MTRNetConfig;
use mtrnet::theory;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "mtrnet", version, about = "CATE estimation with missing treatments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic dataset, mask treatments, write `data.csv`.
    Generate {
        /// JSON with `dgp` (synthetic spec) and optional `missingness` {m, q}.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Fit one method on a CSV; writes `model.json` and an in-sample `report.json`.
    Train {
        #[arg(long)]
        method: String,
        #[arg(long)]
        data: PathBuf,
        /// Network settings as JSON; with a grid, cross-validates on a 70/20 split.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Score a saved model on a CSV; writes `report.json`.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Full multi-run experiment.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Experiment repeated over missing fractions.
    SweepM {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9")]
        m_values: Vec<f64>,
    },
    /// Bound identities and inequalities on random discrete worlds.
    TheoryCheck {
        #[arg(long, default_value_t = 1000)]
        worlds: usize,
        #[arg(long, default_value_t = 5)]
        max_k: usize,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate result files (`results.jsonl` or directories holding one).
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct GenerateConfig {
    dgp: SyntheticDgpSpec,
    #[serde(default)]
    missingness: Option<MissingnessConfig>,
}

/// Network settings for `train`: a base config and an optional grid.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainConfig {
    base: Option<MTRNetConfig>,
    grid: HyperGrid,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text).map_err(mtrnet::Error::from)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn experiment_config(
    config: Option<&Path>,
    preset: Option<Preset>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_json(&text)?
        }
        None => preset.unwrap_or(Preset::Desk).experiment(seed.unwrap_or(0)),
    };
    if config.is_some() {
        if let Some(p) = preset {
            p.apply(&mut cfg);
        }
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if out.is_some() {
        cfg.out = out;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate { config, seed, out } => {
            let gc = match config {
                Some(p) => read_json(&p)?,
                None => GenerateConfig {
                    dgp: SyntheticDgpSpec::shifted(2000, 10, seed),
                    missingness: Some(MissingnessConfig { m: 0.5, q: 0.9 }),
                },
            };
            let mut dgp = gc.dgp;
            dgp.seed = seed;
            let mut data = generate(&dgp)?;
            if let Some(mc) = gc.missingness {
                let spec = MissingnessSpec {
                    m: mc.m,
                    q: mc.q,
                    seed: mtrnet::harness::seeds::substream(seed, "missingness"),
                };
                data = apply_missingness(&data, &spec)?;
            }
            fs::create_dir_all(&out)?;
            let path = out.join("data.csv");
            save_csv(&data, &path)?;
            println!("wrote {} rows to {}", data.n(), path.display());
        }
        Command::Train {
            method,
            data,
            config,
            seed,
            out,
        } => {
            let method: Method = method.parse()?;
            let dataset = load_csv(&data)?;
            let tc: TrainConfig = match config {
                Some(p) => read_json(&p)?,
                None => TrainConfig::default(),
            };
            let base = MTRNetConfig {
                seed,
                ..tc.base.unwrap_or_else(|| Preset::Desk.base())
            };
            let grid = tc.grid.expand(method, &base);
            let classifier = Default::default();
            let chosen = if grid.len() > 1 {
                let (tr, val, _) = mtrnet::datagen::split(
                    &dataset,
                    mtrnet::datagen::DEFAULT_FRACTIONS,
                    mtrnet::harness::seeds::substream(seed, "split"),
                )?;
                let cv = cross_validate(&tr, &val, method, &grid, &classifier)?;
                println!("selected grid point {} of {}", cv.index + 1, grid.len());
                cv.config
            } else {
                grid.into_iter().next().unwrap_or(base)
            };
            let model = fit_method(method, &dataset, &chosen, &classifier)?;
            let tau_hat = model.predict_cate(&dataset.x)?;
            let report = evaluate(&dataset, &tau_hat, &method.name(), seed)?;
            fs::create_dir_all(&out)?;
            write_json(&out.join("model.json"), &model)?;
            write_json(&out.join("report.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Evaluate { model, data, out } => {
            let model: CateModel = read_json(&model)?;
            let dataset = load_csv(&data)?;
            let tau_hat = model.predict_cate(&dataset.x)?;
            let report = evaluate(&dataset, &tau_hat, "model", 0)?;
            fs::create_dir_all(&out)?;
            write_json(&out.join("report.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Experiment {
            config,
            preset,
            seed,
            out,
        } => {
            let cfg = experiment_config(config.as_deref(), preset, seed, out)?;
            let outcome = with_jobs(cli.jobs, || run_experiment(&cfg))??;
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("results"));
            output::write_experiment(&dir, &cfg, &outcome)?;
            print!("{}", format_table(&outcome.aggregate()));
            for f in &outcome.failures {
                eprintln!("run {} {} failed: {}", f.run, f.method, f.error);
            }
            println!("wrote {}", dir.display());
        }
        Command::SweepM {
            config,
            preset,
            seed,
            out,
            m_values,
        } => {
            let cfg = experiment_config(config.as_deref(), preset, seed, out)?;
            let sweep = with_jobs(cli.jobs, || sweep_m(&cfg, &m_values))??;
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("sweep"));
            output::write_sweep_outputs(&dir, &cfg, &sweep)?;
            for r in &sweep.rows {
                if r.domain == "t_missing" && r.metric == "sqrt_pehe" {
                    println!("{:<12} m={:<4} {:.3} ± {:.3}", r.method, r.m, r.mean, r.std);
                }
            }
            println!("wrote {}", dir.join(output::SWEEP_FILE).display());
        }
        Command::TheoryCheck {
            worlds,
            max_k,
            tolerance,
            seed,
            out,
        } => {
            let summary = with_jobs(cli.jobs, || theory::sweep::<f64>(worlds, seed, max_k, tolerance))??;
            print!("{}", summary.table());
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                write_json(&dir.join("theory_check.json"), &summary)?;
            }
            if !summary.passed() {
                bail!("{} bound checks violated", summary.violations);
            }
        }
        Command::Report { results, out } => {
            let mut all = Vec::new();
            for p in results {
                let file = if p.is_dir() { p.join(output::RESULTS_FILE) } else { p };
                all.extend(output::read_results(&file)?);
            }
            let rows = aggregate(&all);
            print!("{}", format_table(&rows));
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                output::write_aggregate(&dir.join(output::AGGREGATE_FILE), &rows)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<mtrnet::Error>().map_or("cli", |e| e.kind());
            let msg = serde_json::json!({ "error": kind, "message": format!("{e:#}") });
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}

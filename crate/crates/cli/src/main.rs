//! `bhh`: train, benchmark and inspect the Bayesian hyper-heuristic.
//!
//! Exit codes: 0 success, 1 gradient check failed, 2 usage error,
//! 3 configuration error, 4 training diverged, 5 file IO failure.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bhh_core::bhh::{train_recording, Mode, TrainSetup};
use bhh_core::data::prepare;
use bhh_core::ffnn::check::run_gradient_check;
use bhh_core::harness::{self, Trainer};
use bhh_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::ConfigFile;

const EXIT_GRADIENT_CHECK: u8 = 1;
const EXIT_CONFIG: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "bhh",
    version,
    about = "Bayesian hyper-heuristic training for feedforward networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one contender once and write its trace.
    Train(RunArgs),
    /// Run every contender over repeated seeds and write rank reports.
    Experiment(RunArgs),
    /// Compare backprop gradients with finite differences on random networks.
    ValidateGradients {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the resolved configuration, including every default.
    ShowConfig {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `experiment.workers`.
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => train(&args),
        Command::Experiment(args) => experiment(&args),
        Command::ValidateGradients { cases, seed } => validate_gradients(cases, seed),
        Command::ShowConfig { config } => show_config(config.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_divergence() {
                EXIT_DIVERGENCE
            } else if e.is_io() {
                EXIT_IO
            } else {
                EXIT_CONFIG
            })
        }
    }
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn resolve(path: &Path) -> Result<config::Resolved> {
    config::load(path)?.resolve(base_dir(path))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn train(args: &RunArgs) -> Result<ExitCode> {
    let resolved = resolve(&args.config)?;
    let e = &resolved.file.experiment;
    let seed = args.seed.unwrap_or(e.seed);
    let contender = resolved.contender(&e.train)?;
    let (train, test) = prepare(&resolved.data, resolved.file.dataset.train_fraction, seed)?;
    let setup = TrainSetup {
        model: resolved.model,
        train: &train,
        test: &test,
        batch_size: resolved.dataset.batch_size,
        epochs: e.epochs,
        seed,
    };
    let mode = match &contender.trainer {
        Trainer::Standalone(h) => Mode::Standalone(h),
        Trainer::Bhh(b) => Mode::Bhh(b),
    };
    let trace = train_recording(&setup, mode)?;

    create_dir(&args.out)?;
    let trace_path = args.out.join(format!("{}_trace.csv", contender.label));
    let curve_path = args.out.join(format!("{}_loss_curve.csv", contender.label));
    harness::write_entity_trace(&trace_path, 0, &trace)?;
    harness::write_loss_curve(&curve_path, 0, &trace)?;

    println!("contender   {}", contender.label);
    println!("seed        {seed}");
    println!(
        "steps       {} of {}",
        trace.steps.len(),
        setup.total_steps()
    );
    if let Some(last) = trace.final_step() {
        println!("train loss  {:.6}", last.train_loss);
        println!("test loss   {:.6}", last.test_loss);
        if let Some(acc) = last.accuracy {
            println!("accuracy    {acc:.4}");
        }
    }
    println!("trace       {}", trace_path.display());
    println!("loss curve  {}", curve_path.display());
    match trace.divergence {
        Some(site) => Err(Error::Divergence(site)),
        None => Ok(ExitCode::SUCCESS),
    }
}

fn experiment(args: &RunArgs) -> Result<ExitCode> {
    let resolved = resolve(&args.config)?;
    let config = resolved.experiment(args.seed, args.workers)?;
    let results = harness::run_experiment(&config)?;
    let table = harness::average_rank(&results.labels, &results.series())?;
    harness::emit_reports(&args.out, &results, &table)?;

    println!(
        "{}: {} contenders x {} runs x {} epochs, base seed {}",
        config.name,
        config.contenders.len(),
        config.runs,
        config.epochs,
        config.base_seed
    );
    println!(
        "{:<10} {:>9} {:>8} {:>5} {:>10} {:>9}",
        "contender", "mean rank", "std", "rank", "test loss", "diverged"
    );
    let mut order: Vec<usize> = (0..table.labels.len()).collect();
    order.sort_by_key(|&i| table.normalised[i]);
    for i in order {
        let runs = &results.runs[i];
        let finite: Vec<f64> = runs
            .iter()
            .map(|r| r.final_test_loss)
            .filter(|l| l.is_finite())
            .collect();
        let mean_loss = if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        println!(
            "{:<10} {:>9.3} {:>8.3} {:>5} {:>10.5} {:>9}",
            table.labels[i],
            table.mean[i],
            table.std[i],
            table.normalised[i],
            mean_loss,
            runs.iter().filter(|r| r.diverged()).count()
        );
    }
    println!("reports in {}", args.out.join(&results.name).display());
    Ok(ExitCode::SUCCESS)
}

fn validate_gradients(cases: usize, seed: u64) -> Result<ExitCode> {
    const H: f64 = 1e-5;
    const THRESHOLD: f64 = 1e-4;
    let report = run_gradient_check(cases, 10, H, seed)?;
    println!("cases               {}", report.cases);
    println!("max relative error  {:.3e}", report.max_relative_error);
    println!("worst case          {}", report.worst_case);
    if report.max_relative_error < THRESHOLD {
        println!("ok (threshold {THRESHOLD:e})");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("FAILED (threshold {THRESHOLD:e})");
        Ok(ExitCode::from(EXIT_GRADIENT_CHECK))
    }
}

fn show_config(path: Option<&Path>) -> Result<ExitCode> {
    let (file, dir) = match path {
        Some(p) => (config::load(p)?, base_dir(p)),
        None => (ConfigFile::default(), Path::new(".")),
    };
    let resolved = file.resolve(dir)?;
    let text = toml::to_string(&resolved.file).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

//! Command-line front end to the benchmark pipeline.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 stage failure.

use std::path::PathBuf;
use std::process::ExitCode;

use actbench::harness::{Pipeline, RunConfig, StageSummary};
use actbench::predict::PredictorKind;
use actbench::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "actbench",
    version,
    about = "Action-inference benchmark for video predictors"
)]
struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the ground-truth episode dataset.
    Generate,
    /// Build one predictor's prediction dataset.
    Predict {
        #[arg(long)]
        kind: PredictorKind,
    },
    /// Train an inference network on a dataset directory.
    TrainInference {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Score models. Without flags, runs every stage up to scoring and
    /// prints the table; with both flags, scores one model on one dataset.
    Evaluate {
        #[arg(long, requires = "model")]
        dataset: Option<PathBuf>,
        #[arg(long, requires = "dataset")]
        model: Option<PathBuf>,
    },
    /// Write the report from cached stages only.
    Report,
    /// Run every stage and write the report.
    Run,
}

fn load_config(cli: &Cli) -> actbench::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.resolved()
}

fn print_stages(stages: &[StageSummary]) {
    for s in stages {
        let how = if s.cache_hit { "cached" } else { "ran" };
        eprintln!(
            "{:<28} {how:<6} {:>9.1}s  {}",
            s.stage,
            s.seconds,
            s.dir.display()
        );
    }
}

fn execute(cli: &Cli, config: RunConfig) -> actbench::Result<()> {
    let mut pipeline = Pipeline::new(&config)?;
    match &cli.command {
        Command::Generate => {
            let gt = pipeline.ground_truth()?;
            println!("{}", gt.dir.display());
        }
        Command::Predict { kind } => {
            let gt = pipeline.ground_truth()?;
            let data = pipeline.predictions(&config.predictor(*kind), &gt)?;
            println!("{}", data.dir.display());
        }
        Command::TrainInference { dataset } => {
            let data = Pipeline::external_dataset(dataset)?;
            let label = dataset
                .file_name()
                .map_or("dataset".into(), |n| n.to_string_lossy().into_owned());
            let model = pipeline.train(&label, &data)?;
            println!("{}", model.dir.display());
        }
        Command::Evaluate {
            dataset: Some(dataset),
            model: Some(model),
        } => {
            let data = Pipeline::external_dataset(dataset)?;
            let model = Pipeline::external_model(model)?;
            let eval = pipeline.score("external", &model, &data)?;
            let s = &eval.value.score;
            println!(
                "r2 {:.4}  mae {:.4}  (even r2 {:.4}, odd r2 {:.4})  -> {}",
                s.aggregate_r2,
                s.aggregate_mae,
                s.even.r2,
                s.odd.r2,
                eval.dir.display()
            );
        }
        Command::Evaluate { .. } => {
            let (report, _) = pipeline.assemble()?;
            print!("{}", report.to_text());
        }
        Command::Report => {
            let mut offline = Pipeline::new(&config)?.offline();
            let outcome = offline.run()?;
            print!("{}", outcome.report.to_text());
            eprintln!("report written to {}", outcome.report_dir.display());
            pipeline = offline;
        }
        Command::Run => {
            let outcome = pipeline.run()?;
            print!("{}", outcome.report.to_text());
            eprintln!("report written to {}", outcome.report_dir.display());
        }
    }
    print_stages(pipeline.stages());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(1);
        }
    }
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match execute(&cli, config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (Error::InvalidConfig(_) | Error::Format { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

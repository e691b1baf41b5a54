use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gaitfuse::experiment::{self, ExperimentConfig, ExperimentOutcome};
use gaitfuse::Result;
use log::error;

/// Multimodal gait classification: spatial encodings, correlation-trained
/// recurrent features and per-class HMMs.
#[derive(Parser)]
#[command(name = "gaitfuse", version)]
struct Cli {
    /// Override every random seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline described by a configuration file.
    Run { config: PathBuf },
    /// Recompute metrics from a scores.csv table.
    Metrics { scores: PathBuf },
    /// Fit features only and write features.csv.
    Export { config: PathBuf },
}

fn load(cli: &Cli, path: &PathBuf) -> Result<ExperimentConfig> {
    let mut cfg = experiment::load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn summarize(outcome: &ExperimentOutcome) {
    println!("output: {}", outcome.out_dir.display());
    println!(
        "samples: {} train, {} test",
        outcome.split.train.len(),
        outcome.split.test.len()
    );
    if let Some(m) = &outcome.metrics {
        println!("accuracy: {:.4}", m.accuracy);
        for (c, name) in outcome.class_names.iter().enumerate() {
            let acc = m.per_class_accuracy[c].map_or("n/a".to_string(), |a| format!("{a:.4}"));
            let auc = m.roc[c].auc.map_or("n/a".to_string(), |a| format!("{a:.4}"));
            println!("  {name}: accuracy {acc}, auc {auc}");
        }
        println!(
            "baselines: sfe-only {:.4}, corrmnn-only {:.4}",
            outcome.baselines[0], outcome.baselines[1]
        );
    } else {
        println!("features: {} samples", outcome.features.len());
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run { config } => summarize(&experiment::run_experiment(&load(cli, config)?)?),
        Command::Export { config } => summarize(&experiment::run_export(&load(cli, config)?)?),
        Command::Metrics { scores } => match &cli.out_dir {
            Some(dir) => {
                let report = experiment::rescore(scores, dir)?;
                println!("accuracy: {:.4}", report.accuracy);
                println!("output: {}", dir.display());
            }
            None => {
                let (truth, pred, s) = experiment::read_scores_csv(scores)?;
                let report = experiment::compute_metrics(&truth, &pred, &s)?;
                print!("{}", experiment::metrics_csv(&report, truth.len(), &[]));
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("could not size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}

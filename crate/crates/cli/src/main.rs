//! `weldqc`: generate, preprocess, cluster, label, rank, train, evaluate and
//! stream arc-voltage weld data.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or format error, 3 error
//! events detected (`stream` only).

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "weldqc", version, about = "Weld-quality monitoring from arc-voltage series")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus: one series file per trial plus ground truth
    Generate {
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// JSON array of welder profiles, used instead of the default roster
        #[arg(long, value_name = "FILE")]
        profiles: Option<PathBuf>,
    },
    /// Turn series files into an unlabeled feature dataset
    Preprocess {
        /// A series file or a directory of `.series` files
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a SOM on a feature dataset
    Cluster {
        #[arg(long)]
        data: PathBuf,
        /// Where to write the SOM model
        #[arg(long)]
        model: PathBuf,
    },
    /// Label a dataset with a trained SOM
    Label {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank welders by undesirable pattern count
    Rank {
        #[arg(long)]
        data: PathBuf,
        /// CSV output; standard output when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train an MLP on the training part of a labeled dataset
    TrainMlp {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Train an RBF network on the training part of a labeled dataset
    TrainRbf {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Score trained models on the test part of a labeled dataset
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// Model file; repeat to compare several
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        /// JSON report output
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run every stage from a series corpus to the comparison table
    Pipeline {
        /// Directory of `.series` files
        #[arg(long)]
        corpus: PathBuf,
        /// Directory for all artifacts
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify a live sample feed, printing one JSON line per error event
    Stream {
        #[arg(long)]
        model: PathBuf,
        /// Sample feed; standard input when absent
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

/// Bad flag or config value.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.chain().any(|c| c.is::<UsageError>()) {
        1
    } else {
        2
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let cfg = cli.overrides.resolve()?;
    eprintln!("effective config: {}", cfg.to_json());
    match cli.command {
        Command::Stream { model, input } => return commands::stream(&cfg, &model, input.as_deref()),
        Command::Generate { out, profiles } => commands::generate(&cfg, &out, profiles.as_deref()),
        Command::Preprocess { input, out } => commands::preprocess(&cfg, &input, &out),
        Command::Cluster { data, model } => commands::cluster(&cfg, &data, &model),
        Command::Label { data, model, out } => commands::label(&cfg, &data, &model, &out),
        Command::Rank { data, out } => commands::rank(&data, out.as_deref()),
        Command::TrainMlp { data, model } => commands::train_mlp(&cfg, &data, &model),
        Command::TrainRbf { data, model } => commands::train_rbf(&cfg, &data, &model),
        Command::Evaluate { data, models, report } => commands::evaluate(&cfg, &data, &models, report.as_deref()),
        Command::Pipeline { corpus, out } => commands::pipeline(&cfg, &corpus, &out),
    }?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("weldqc: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

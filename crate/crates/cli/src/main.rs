mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fearec_core::data::{EvalSplit, Format};

use crate::config::Overrides;
use crate::failure::Failure;

#[derive(Parser)]
#[command(name = "fearec", version, about = "Frequency-enhanced hybrid attention for sequential recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set gamma=1.0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a processed dataset from a raw interaction log, or a synthetic
    /// periodic one, and print its statistics.
    Prepare {
        /// Raw interactions (`user<TAB>item<TAB>timestamp`, or CSV with a header).
        #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
        input: Option<PathBuf>,
        #[arg(long, default_value = "tsv")]
        format: Format,
        #[arg(long, default_value_t = 5)]
        min_count: usize,
        /// Generate users with repeating item motifs instead of reading a log.
        #[arg(long)]
        synthetic: bool,
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 100)]
        items: usize,
        #[arg(long, default_value_t = 5)]
        period: usize,
        #[arg(long, default_value_t = 50)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Processed dataset file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train, evaluating on the validation split after every epoch.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Score a checkpoint on a split and write the report.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "test")]
        split: EvalSplit,
        /// Rank the user's own history items too.
        #[arg(long)]
        include_seen: bool,
        /// Report file (default: `eval_<split>.json` next to the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export attention matrices and delay weights for one user.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// User name from the raw log, or dense index.
        #[arg(long)]
        user: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in property suites.
    Check {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("FEAREC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::config(format!("FEAREC_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Prepare {
            input,
            format,
            min_count,
            synthetic,
            users,
            items,
            period,
            max_len,
            seed,
            out,
        } => {
            let source = match input {
                Some(path) if !synthetic => commands::Source::Log { path, format, min_count },
                _ => commands::Source::Synthetic { users, items, period, max_len, seed },
            };
            commands::prepare(source, &out)
        }
        Command::Train { common, dataset } => {
            let overrides = Overrides {
                dataset,
                out: common.out,
                seed: common.seed,
                sets: common.sets,
            };
            let cfg = config::RunConfig::load(common.config.as_deref(), &overrides)?;
            commands::train(&cfg)
        }
        Command::Evaluate {
            checkpoint,
            dataset,
            split,
            include_seen,
            out,
        } => commands::evaluate(&checkpoint, &dataset, split, !include_seen, out.as_deref()),
        Command::Inspect {
            checkpoint,
            dataset,
            user,
            out,
        } => commands::inspect(&checkpoint, &dataset, &user, &out),
        Command::Check { seed } => commands::check(seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("fearec: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

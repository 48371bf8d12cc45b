//! Config-driven pipelines over the `tda-lab` library: instance generation,
//! attribution, encoder training and evaluation, each writing a
//! self-describing run directory.

pub mod commands;
pub mod config;
pub mod error;
pub mod run_dir;
pub mod scores;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{load, parse_overrides};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "tda-lab", version, about = "Training-data attribution lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
#[command(after_help = "Any other --key value pair overrides a config field; nested keys are dotted, e.g. --train.lr 0.001")]
struct Common {
    /// JSON config file; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory for every artifact (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate cross-validation instances (subsets, retrained losses, labels).
    GenData(Common),
    /// Score training data against targets with one attribution method.
    Attribute(Common),
    /// Train a group-attribution encoder on generated instances.
    TrainAirrep(Common),
    /// Linear datamodeling score of subset scores against an instance.
    Eval(Common),
    /// Greedy top-k selection from pairwise scores.
    Select(Common),
    /// Top-1 tag classification from pairwise scores.
    Classify(Common),
}

/// Separates `--key value` overrides from the flags clap knows about.
fn split_args(args: &[String]) -> (Vec<String>, Vec<String>) {
    let mut clap_args = Vec::new();
    let mut overrides = Vec::new();
    let mut seen_command = false;
    let mut it = args.iter().enumerate();
    while let Some((i, a)) = it.next() {
        if i == 0 || !seen_command {
            seen_command |= i > 0 && !a.starts_with('-');
            clap_args.push(a.clone());
            continue;
        }
        let name = a.split_once('=').map_or(a.as_str(), |(k, _)| k);
        let known = matches!(name, "--config" | "--out" | "--help" | "-h");
        if known || !a.starts_with("--") {
            clap_args.push(a.clone());
            if matches!(a.as_str(), "--config" | "--out") {
                if let Some((_, v)) = it.next() {
                    clap_args.push(v.clone());
                }
            }
        } else {
            overrides.push(a.clone());
            if !a.contains('=') {
                if let Some((_, v)) = it.next() {
                    overrides.push(v.clone());
                }
            }
        }
    }
    (clap_args, overrides)
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("TDA_LAB_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Usage(format!("TDA_LAB_THREADS must be a positive integer, got {v:?}")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cmd: Command, overrides: &[(String, String)]) -> Result<String> {
    use commands::*;
    match cmd {
        Command::GenData(c) => gen_data::run(load(c.config.as_deref(), overrides)?, &c.out),
        Command::Attribute(c) => attribute::run(load(c.config.as_deref(), overrides)?, &c.out),
        Command::TrainAirrep(c) => train_airrep::run(load(c.config.as_deref(), overrides)?, &c.out),
        Command::Eval(c) => eval::run(load(c.config.as_deref(), overrides)?, &c.out),
        Command::Select(c) => select::run(load(c.config.as_deref(), overrides)?, &c.out),
        Command::Classify(c) => classify::run(load(c.config.as_deref(), overrides)?, &c.out),
    }
}

/// Runs one invocation and returns the process exit code.
pub fn main_with_args(args: &[String]) -> i32 {
    let (clap_args, raw_overrides) = split_args(args);
    let cli = match Cli::try_parse_from(&clap_args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let start = Instant::now();
    let result = configure_threads()
        .and_then(|_| parse_overrides(&raw_overrides))
        .and_then(|ov| dispatch(cli.command, &ov));
    match result {
        Ok(summary) => {
            println!("{summary} ({:.1}s)", start.elapsed().as_secs_f64());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

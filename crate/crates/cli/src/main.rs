//! `crbm`: train, encode, decode and evaluate complex-valued RBMs on
//! synthetic data and STFT spectra.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::commands::Output;
use crate::config::Settings;
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "crbm", version, about = "Complex-valued RBM pipelines for complex spectra")]
struct Cli {
    /// key=value config file; '#' starts a comment.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads for parallel sections; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Settings that override the config file.
    #[arg(value_name = "KEY=VALUE")]
    settings: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Correlated complex mixture points, or speech-like WAVs with a manifest.
    SynthData(Overrides),
    /// Train a CRBM or GB-RBM on a feature file.
    Train(Overrides),
    /// Hidden expectations for every frame of a feature file.
    Encode(Overrides),
    /// Features from hidden expectations, frame-wise or by trajectory.
    Decode(Overrides),
    /// WAV through analysis, model and synthesis, with metrics.
    Reconstruct(Overrides),
    /// Spectral metrics between reference and estimate WAVs.
    Eval(Overrides),
    /// Gibbs samples from a trained model.
    Sample(Overrides),
    /// Fit a PCA basis to pooled frames and write training features.
    CpcaFit(Overrides),
}

/// A subcommand entry point.
type Handler = fn(&Settings, &Output) -> CliResult<()>;

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let out = Output { dir: cli.out };
    let (overrides, command): (&[String], Handler) = match &cli.command {
        Command::SynthData(o) => (&o.settings, commands::synth_data),
        Command::Train(o) => (&o.settings, commands::train),
        Command::Encode(o) => (&o.settings, commands::encode_cmd),
        Command::Decode(o) => (&o.settings, commands::decode_cmd),
        Command::Reconstruct(o) => (&o.settings, commands::reconstruct_cmd),
        Command::Eval(o) => (&o.settings, commands::eval),
        Command::Sample(o) => (&o.settings, commands::sample),
        Command::CpcaFit(o) => (&o.settings, commands::cpca_fit),
    };
    let settings = Settings::load(cli.config.as_deref(), cli.seed, overrides)?;
    command(&settings, &out)
}

fn one_line(text: &str) -> String {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .trim_start_matches("error: ")
        .to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CRBM_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let err = CliError::Usage(one_line(&e.to_string()));
            eprintln!("error[{}]: {err}", err.code());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}

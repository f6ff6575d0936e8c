//! fLSA command line: corpus prep, model fitting, tag dynamics, sampling,
//! and evaluation. One subcommand per pipeline capability; artifacts are
//! the JSON/JSONL/DOT formats owned by the library modules. Logs go to
//! stderr, data to stdout or `--out`.
//!
//! Exit codes: 0 success, 1 validation error (single-line diagnostic),
//! 2 runtime failure (checkpoints preserved).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::GatewayArgs;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config, or inputs: detected before real work starts.
    Validation(String),
    /// Failure mid-run; partial artifacts and checkpoints stay on disk.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError::Validation(message.into())
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

#[derive(Parser)]
#[command(name = "flsa", version, about = "Latent tag induction over segmented documents, tag dynamics, hierarchical sampling, and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; overrides the config file
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Load, segment, validate, and re-emit a corpus as normalized JSONL
    Ingest(commands::IngestArgs),
    /// Fit the classical PLSA baseline on a corpus
    FitPlsa(commands::FitPlsaArgs),
    /// Run the fLSA EM loop on a corpus
    FitFlsa(commands::FitFlsaArgs),
    /// Assign tags to a (possibly held-out) corpus with a fitted model
    Tag(commands::TagArgs),
    /// Bigram dynamic model over tag sequences
    #[command(subcommand)]
    Dynamics(DynamicsCommand),
    /// Generate candidate solutions
    #[command(subcommand)]
    Sample(SampleCommand),
    /// Evaluate tag informativeness and solution quality
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Subcommand)]
enum DynamicsCommand {
    /// Fit the bigram model from stored assignments or a tagged corpus
    Fit(commands::DynamicsFitArgs),
    /// Export the transition graph as Graphviz DOT
    Dot(commands::DynamicsDotArgs),
}

#[derive(Subcommand)]
enum SampleCommand {
    /// One-call direct sampling
    Direct(commands::SampleArgs),
    /// Two-step sampling: generate an outline, then solve with it
    Outline(commands::SampleArgs),
    /// Hierarchical sampling from bigram-model tag outlines
    Hier(commands::SampleHierArgs),
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Reconstruction log-likelihood of held-out segments
    Recon(commands::EvalReconArgs),
    /// Hits@K accuracy over graded problems
    Hitsk(commands::EvalHitskArgs),
}

/// Flags every gateway-driven subcommand shares.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonGateway {
    #[command(flatten)]
    gateway: GatewayArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.exit_code() == 0 => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    let run_config = match config::RunConfig::load_opt(cli.config.as_ref()) {
        Ok(mut config) => {
            if let Some(seed) = cli.seed {
                config.seed = Some(seed);
            }
            config
        }
        Err(CliError::Validation(message)) => {
            eprintln!("error: {message}");
            return ExitCode::from(1);
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Ingest(args) => commands::ingest(args),
        Command::FitPlsa(args) => commands::fit_plsa(args, &run_config),
        Command::FitFlsa(args) => commands::fit_flsa(args, &run_config),
        Command::Tag(args) => commands::tag(args, &run_config),
        Command::Dynamics(DynamicsCommand::Fit(args)) => commands::dynamics_fit(args, &run_config),
        Command::Dynamics(DynamicsCommand::Dot(args)) => commands::dynamics_dot(args),
        Command::Sample(SampleCommand::Direct(args)) => {
            commands::sample_flat(args, commands::FlatMethod::Direct, &run_config)
        }
        Command::Sample(SampleCommand::Outline(args)) => {
            commands::sample_flat(args, commands::FlatMethod::Outline, &run_config)
        }
        Command::Sample(SampleCommand::Hier(args)) => commands::sample_hier(args, &run_config),
        Command::Eval(EvalCommand::Recon(args)) => commands::eval_recon(args, &run_config),
        Command::Eval(EvalCommand::Hitsk(args)) => commands::eval_hitsk(args, &run_config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

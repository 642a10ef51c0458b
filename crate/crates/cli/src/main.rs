use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod report;

use report::Report;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Quota,
    Multinomial,
}

#[derive(Debug, Parser)]
#[command(name = "secgames", version, about = "Security game solvers")]
struct Cli {
    #[arg(long, global = true, value_enum, default_value = "table")]
    format: Format,

    /// Seed for every sampled quantity.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Iteration cap for iterative solvers (value iteration, fictitious play).
    #[arg(long, global = true)]
    max_iter: Option<usize>,

    /// Convergence tolerance / equilibrium check tolerance.
    #[arg(long, global = true)]
    epsilon: Option<f64>,

    /// Append-only response cache for external policies.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,

    /// Retries per external policy request.
    #[arg(long, global = true, default_value_t = 2)]
    retries: u32,

    /// Endpoint for external policies without their own.
    #[arg(long, global = true, env = "SECGAMES_POLICY_URL")]
    policy_url: Option<String>,

    #[arg(long, global = true, env = "SECGAMES_POLICY_TIMEOUT_MS", default_value_t = 10_000)]
    policy_timeout_ms: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a game document, dispatching on its kind.
    Solve { spec: PathBuf },
    /// Recompute the rock-paper-scissors prompt game and compare with published values.
    AuditRps,
    /// Run a workflow document.
    RunWorkflow {
        spec: PathBuf,
        /// Failure plan JSON; replaces the document's own plan.
        #[arg(long)]
        failures: Option<PathBuf>,
    },
    /// Prompt-distance versus output-gap profile of a prompt game's policies.
    Stability { spec: PathBuf },
    /// Serve the external policy contract from a fixed distribution.
    StubServer {
        #[arg(long, default_value = "127.0.0.1:8765")]
        bind: String,
        #[arg(long, value_delimiter = ',', default_value = "Rock,Paper,Scissors")]
        labels: Vec<String>,
        /// Probabilities aligned with the labels; uniform when omitted.
        #[arg(long, value_delimiter = ',')]
        probs: Vec<f64>,
        #[arg(long, value_enum, default_value = "quota")]
        mode: Mode,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<secgames::GameError>() {
        Some(e) if e.is_validation() => 2,
        Some(e) if e.is_convergence() => 3,
        Some(secgames::GameError::Policy { source, .. }) if source.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = cli.format;
    match commands::run(&cli) {
        Ok(report) => {
            print(&report, format);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn print(report: &Report, format: Format) {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report.json).expect("json values serialize")),
        Format::Table => print!("{}", report.table),
    }
}

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use swarmsteer::session::SessionConfig;
use swarmsteer_cli::commands::{self, BinReportArgs, SimulateArgs, SweepArgs, TableArgs};
use swarmsteer_cli::server::{serve, AppState};
use tokio::net::TcpListener;

#[derive(Debug, Parser)]
#[command(
    name = "swarmsteer",
    version,
    about = "Steer a simulated robot swarm with noisy binary inputs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run seeded trials and write trial logs and accuracy summaries.
    Simulate(SimulateArgs),
    /// Build the stopping-threshold lookup table.
    ThresholdTable(TableArgs),
    /// Sweep synthetic dictionary sizes with stopping disabled.
    Sweep(SweepArgs),
    /// Accuracy and deviation per trial-length bin from a trial log.
    BinReport(BinReportArgs),
    /// Serve interactive sessions over HTTP and WebSocket.
    Serve(ServeArgs),
}

#[derive(Debug, clap::Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Default session config JSON; each create request may override fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for per-session JSONL logs.
    #[arg(long)]
    log_dir: Option<PathBuf>,
}

async fn run_server(args: ServeArgs) -> Result<()> {
    let defaults = match &args.config {
        Some(p) => SessionConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => SessionConfig::default(),
    };
    if let Some(dir) = &args.log_dir {
        std::fs::create_dir_all(dir)?;
    }
    let listener = TcpListener::bind((args.host.as_str(), args.port)).await?;
    println!("listening on {}", listener.local_addr()?);
    serve(listener, AppState::new(defaults, args.log_dir)).await?;
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    match Cli::parse().command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::ThresholdTable(a) => commands::threshold_table(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::BinReport(a) => commands::bin_report_cmd(&a),
        Command::Serve(a) => tokio::runtime::Runtime::new()?.block_on(run_server(a)),
    }
}

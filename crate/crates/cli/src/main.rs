use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use notrade_cli::{document, execute, resolve_seed, Command, Failure, RunConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "notrade", version, about = "No-trade bands, welfare and turnover under small bid-ask spreads")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed; overrides the config file and NOTRADE_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of simulated paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Number of time steps.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Record this many paths to trace.csv (`simulate` only).
    #[arg(long, global = true)]
    trace: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// No-trade band summary at time zero.
    Band,
    /// Predicted certainty-equivalent loss.
    Welfare,
    /// Predicted turnover.
    Turnover,
    /// Monte Carlo simulation of the band policy.
    Simulate,
    /// Spread sweep with power-law regressions.
    Sweep,
    /// Mean-variance frontier correction and simulated Sharpe ratios.
    Meanvar,
    /// Long-run growth-rate reduction for log utility.
    Growth,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Band => Command::Band,
            Sub::Welfare => Command::Welfare,
            Sub::Turnover => Command::Turnover,
            Sub::Simulate => Command::Simulate,
            Sub::Sweep => Command::Sweep,
            Sub::Meanvar => Command::Meanvar,
            Sub::Growth => Command::Growth,
        }
    }
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cmd: Command = cli.command.into();
    let path = cli
        .config
        .ok_or_else(|| Failure::Config("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(&path).map_err(Failure::Config)?;
    if let Some(n) = cli.paths {
        cfg.grid.n_paths = n;
    }
    if let Some(n) = cli.steps {
        cfg.grid.n_steps = n;
    }
    if let Some(n) = cli.trace {
        cfg.simulation.trace_paths = n;
    }
    let env = std::env::var("NOTRADE_SEED").ok();
    let seed = resolve_seed(cli.seed, cfg.seed, env.as_deref()).map_err(Failure::Config)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }

    let start = Instant::now();
    let outcome = execute(cmd, &cfg, seed)?;
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let metadata = json!({
        "timestamp_unix": timestamp,
        "elapsed_seconds": start.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    let doc = document(cmd, &cfg, seed, outcome.result, metadata);

    let dir = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
    write_file(&dir, &format!("{}.json", cmd.name()), &doc)?;
    for (name, body) in &outcome.files {
        write_file(&dir, name, body)?;
    }
    println!("{doc}");
    if let Some(table) = outcome.stderr {
        eprint!("{table}");
    }
    match outcome.failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}

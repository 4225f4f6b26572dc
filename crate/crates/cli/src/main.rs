//! Experiment harness: builds path sets, demand series, and trained split
//! predictors, then evaluates recovery strategies under sampled link
//! failures. Every emitted number comes from a library call; the binary only
//! sequences stages and formats output.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process;

use clap::{Args, Parser, Subcommand};

/// Process-level failure classes, mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Invalid or inconsistent configuration (exit 2).
    Config(String),
    /// Unreadable or malformed input data or artifacts (exit 3).
    Data(String),
    /// A pipeline stage failed while computing (exit 4).
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<pathweave::Error> for CliError {
    fn from(e: pathweave::Error) -> Self {
        use pathweave::Error as E;
        match e {
            E::Parse { .. } | E::Topology(_) | E::Degenerate | E::Io(_) | E::Json(_) => {
                CliError::Data(e.to_string())
            }
            E::Dimension(_) | E::NoUsablePath(_) | E::Unsolvable(_) => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "pathweave",
    version,
    about = "Failure-aware traffic engineering experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load a topology, print its shape, and prune degree-one nodes.
    Topo(ConfigArgs),
    /// Build routing and backup paths; write pathset.json and risk stats.
    Paths(ConfigArgs),
    /// Generate the demand series; write tms.json.
    Tm(ConfigArgs),
    /// Train the split-ratio predictor; write model.ckpt.
    Train(ConfigArgs),
    /// Evaluate recovery strategies; write results.csv and summary.json.
    Run(ConfigArgs),
    /// Report mean and tail utilization change under demand perturbation.
    Noise(NoiseArgs),
    /// Forwarding-state footprint calculator.
    State(StateArgs),
}

/// Config file plus overrides for its most commonly varied keys.
#[derive(Args, Clone)]
pub struct ConfigArgs {
    /// JSON experiment configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory (overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Routing paths per pair (overrides `k`).
    #[arg(long)]
    k: Option<usize>,
    /// Demand matrices to generate (overrides `tm.count`).
    #[arg(long)]
    tm_count: Option<usize>,
    /// Demand generator seed (overrides `tm.seed`).
    #[arg(long)]
    tm_seed: Option<u64>,
    /// Training epochs (overrides `train.epochs`).
    #[arg(long)]
    epochs: Option<usize>,
    /// Training step size (overrides `train.learning_rate`).
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Failure scenarios to evaluate (overrides `scenarios.count`).
    #[arg(long)]
    scenario_count: Option<usize>,
    /// Scenario sampler seed (overrides `scenarios.seed`).
    #[arg(long)]
    scenario_seed: Option<u64>,
    /// Links failed per scenario (overrides `scenarios.simultaneous`).
    #[arg(long)]
    simultaneous: Option<usize>,
}

#[derive(Args)]
struct NoiseArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Comma-separated perturbation levels.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3")]
    alphas: Vec<f64>,
}

#[derive(Args)]
struct StateArgs {
    /// Network size N.
    #[arg(long)]
    nodes: u64,
    /// Router degree d.
    #[arg(long)]
    degree: u64,
    /// Paths per destination M.
    #[arg(long)]
    paths: u64,
    /// Segments per path L.
    #[arg(long)]
    segments: u64,
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::Topo(args) => pipeline::cmd_topo(&args),
        Cmd::Paths(args) => pipeline::cmd_paths(&args),
        Cmd::Tm(args) => pipeline::cmd_tm(&args),
        Cmd::Train(args) => pipeline::cmd_train(&args),
        Cmd::Run(args) => pipeline::cmd_run(&args),
        Cmd::Noise(args) => pipeline::cmd_noise(&args.cfg, &args.alphas),
        Cmd::State(args) => cmd_state(&args),
    }
}

fn cmd_state(args: &StateArgs) -> CliResult<()> {
    if args.nodes < 2 || args.degree < 1 || args.paths < 1 || args.segments < 1 {
        return Err(CliError::Config(
            "state arguments must satisfy nodes >= 2, degree/paths/segments >= 1".into(),
        ));
    }
    let est = pathweave::metrics::router_state(args.nodes, args.degree, args.paths, args.segments);
    println!("rule entries: {}", est.rule_entries);
    println!("rule bytes: {}", est.rule_bytes);
    println!("path table entries: {}", est.path_table_entries);
    println!("path table bytes: {}", est.path_table_bytes);
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("{e}");
        process::exit(e.exit_code());
    }
}

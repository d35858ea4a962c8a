//! `focal` — generate shape datasets, train conditioned encoders, and
//! evaluate them, as reproducible run directories.
//!
//! Exit codes: 0 success, 1 usage (bad flags/config), 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "focal", version, about = "Instruction-conditioned image embeddings on procedural shape data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset into OUT/dataset (manifest, image blob, vocabulary).
    GenData(GenDataArgs),
    /// Train on OUT/dataset, writing OUT/checkpoint.flck and OUT/train_log.tsv.
    Train(TrainArgs),
    /// Evaluate OUT/checkpoint.flck on OUT/dataset, writing OUT/report.json.
    Eval(EvalArgs),
    /// Render one or more report files as an aligned comparison table.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Config file (flat `key = value` lines); flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Global seed (data, init, batching all derive from it).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Run directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Images per (color, shape) cell of the discrete grid.
    #[arg(long, value_name = "N")]
    n_per_combo: Option<usize>,

    /// Generate the continuous-color dataset instead.
    #[arg(long)]
    continuous: bool,

    /// Image count for --continuous.
    #[arg(long, value_name = "N")]
    n_images: Option<usize>,

    /// Comma-separated condition list (color, shape, both, continuous).
    #[arg(long, value_name = "LIST")]
    conditions: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Encoder variant: clip (two towers) or mllm (one decoder stack).
    #[arg(long, value_name = "NAME")]
    variant: Option<String>,

    #[arg(long, value_name = "N")]
    batch_size: Option<usize>,

    #[arg(long, value_name = "N")]
    epochs: Option<usize>,

    /// Peak learning rate.
    #[arg(long, value_name = "X")]
    lr: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Conditions to run retrieval under (comma-separated).
    #[arg(long, value_name = "LIST")]
    conditions: Option<String>,

    /// Run the continuous-color rank-correlation protocol.
    #[arg(long)]
    continuous: bool,

    /// Run the k-shot linear-probe protocol.
    #[arg(long)]
    probe: bool,

    /// Shot counts for --probe.
    #[arg(long, value_name = "N", num_args = 1.., value_delimiter = ' ')]
    k: Vec<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report files to tabulate (two reports add a delta column).
    #[arg(value_name = "REPORT", required = true)]
    reports: Vec<PathBuf>,

    /// Also write the table as CSV for external plotting.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
}

use commands::UsageError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Err(e) = init_thread_pool() {
        eprintln!("error: {}", e.0);
        return ExitCode::from(1);
    }

    let result = match cli.command {
        Command::GenData(args) => commands::gen_data(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Report(args) => commands::report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(e)) => {
            eprintln!("error: {}", e.0);
            ExitCode::from(1)
        }
        Err(commands::CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// FOCAL_LENS_THREADS caps the rayon pool; unset keeps the default.
fn init_thread_pool() -> Result<(), UsageError> {
    let Ok(raw) = std::env::var("FOCAL_LENS_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .map_err(|_| UsageError(format!("FOCAL_LENS_THREADS={raw:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| UsageError(format!("thread pool: {e}")))
}

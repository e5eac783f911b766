use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use influence_core::pipeline::{
    parse_reference_time, run_pipeline, Mode, Overrides, RunConfig, RunError, Stage,
    CONFIG_EXIT_CODE,
};

#[derive(Parser)]
#[command(
    name = "influence",
    version,
    about = "Batch influence scoring over multi-network interaction logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate, window and deduplicate the input files.
    Ingest(RunArgs),
    /// Aggregate and normalize features from the ingested batch.
    Features(RunArgs),
    /// Fit per-network weights from pairwise labels.
    Train(RunArgs),
    /// Score every user with the trained models.
    Score(RunArgs),
    /// Reports against ground truth, reference rankings and cohorts.
    Evaluate(RunArgs),
    /// Generate a synthetic input set with known latent influence.
    Simulate(RunArgs),
    /// Every stage in order.
    All(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Epoch seconds, RFC 3339 or YYYY-MM-DD.
    #[arg(long)]
    reference_time: Option<String>,
    /// Output directory; overrides the config.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn run(mode: Mode, args: &RunArgs) -> Result<(), anyhow::Error> {
    let reference_time = args
        .reference_time
        .as_deref()
        .map(parse_reference_time)
        .transpose()
        .map_err(RunError::from)?;
    let overrides = Overrides {
        seed: args.seed,
        reference_time,
        output_dir: args.out.clone(),
    };
    let config = RunConfig::load(&args.config, &overrides)
        .map_err(RunError::from)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let outcome = run_pipeline(&config, mode)?;
    for (stage, elapsed) in &outcome.timings {
        eprintln!("{stage}: {:.2}s", elapsed.as_secs_f64());
    }
    println!("{}", config.output_dir.join("manifest.txt").display());
    Ok(())
}

/// The error chain joined with ": ". Library errors already embed their
/// source in the message, so a cause that repeats the previous text is skipped.
fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !parts.last().is_some_and(|prev| prev.ends_with(&msg)) {
            parts.push(msg);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Ingest(a) => (Mode::Only(Stage::Ingest), a),
        Command::Features(a) => (Mode::Only(Stage::Features), a),
        Command::Train(a) => (Mode::Only(Stage::Train), a),
        Command::Score(a) => (Mode::Only(Stage::Score), a),
        Command::Evaluate(a) => (Mode::Only(Stage::Evaluate), a),
        Command::Simulate(a) => (Mode::Only(Stage::Simulate), a),
        Command::All(a) => (Mode::All, a),
    };
    match run(mode, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<RunError>())
                .map_or(CONFIG_EXIT_CODE, RunError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lfmc_cli::config::default_output_dir;
use lfmc_cli::{exit, run_id, CliError, Config, RunManifest};
use lfmc_core::Strategy;

/// Rare-event failure probabilities with a multi-fidelity surrogate inside
/// subset simulation.
#[derive(Parser)]
#[command(name = "lfmc", version)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an analysis and write summary.json, samples.csv, lf_calls.csv and
    /// manifest.toml.
    Run(RunArgs),
    /// Parse and validate a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (TOML, or JSON with a .json extension).
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    config: Option<PathBuf>,
    /// Re-run the configuration recorded in a previous run's manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to lfmc-output/<run id>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    beta: Option<f64>,
}

fn load(args: &RunArgs) -> Result<Config, CliError> {
    let mut config = match (&args.config, &args.manifest) {
        (Some(path), _) => Config::load(path)?,
        (None, Some(path)) => RunManifest::load(path)?.config,
        (None, None) => unreachable!("clap requires one source"),
    };
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    if let Some(strategy) = args.strategy {
        config.strategy = strategy;
    }
    if let Some(beta) = args.beta {
        config.beta = Some(beta);
    }
    Ok(config)
}

fn run(args: RunArgs) -> Result<u8, CliError> {
    let config = load(&args)?;
    config.validate()?;
    let out = args.out.unwrap_or_else(|| default_output_dir(&run_id(&config)));
    let outcome = lfmc_cli::execute(&config, &out)?;
    let s = &outcome.summary;
    println!(
        "p_f = {:.6e}  cov = {:.4}  subsets = {}  HF calls = {} ({:.3}% of samples)",
        s.p_f,
        s.cov,
        s.n_subsets,
        s.hf_calls,
        100.0 * s.hf_fraction
    );
    if s.incomplete {
        eprintln!("warning: threshold did not reach the failure level; results are partial");
    }
    println!("results in {}", out.display());
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { config } => Config::load(&config).and_then(|c| {
            c.validate()?;
            println!("{}: valid ({} low-fidelity models)", config.display(), c.n_lf_models());
            Ok(exit::SUCCESS)
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

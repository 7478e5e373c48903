//! `oodle` — experiment runner for the out-of-distribution learning lab.
//!
//! Subcommands: `run <config>`, `verify thm1|thm2`, `sweep <config>`,
//! `metrics <results.json>`.  Runs are deterministic given the master seed,
//! independent of `--threads`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};

use oodle_cli::config::{ExperimentConfig, ExperimentKind, OutputFormat, DEFAULT_SEED};
use oodle_cli::emit::{emit_csv, emit_json, emit_plotdata, emit_run_record, render_table, RunRecord};
use oodle_cli::runner::{execute, CliError, ResultsDoc};

#[derive(Parser)]
#[command(name = "oodle", version, about = "out-of-distribution learning lab runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TheoremName {
    Thm1,
    Thm2,
}

#[derive(clap::Args, Clone)]
struct RunFlags {
    /// Master seed (overrides config and OODLE_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Trial count override.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads for trial parallelism (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (default: current directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Restrict results to one format (default: both).
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run a built-in theorem verification.
    Verify {
        #[arg(value_enum)]
        theorem: TheoremName,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Execute a sweep config (the config's kind must be `sweep`).
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Re-render a saved results JSON as a table.
    Metrics { results: PathBuf },
}

fn env_seed() -> Option<u64> {
    std::env::var("OODLE_SEED").ok().and_then(|s| s.parse().ok())
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(CliError::Config)
}

fn run_config(config: &ExperimentConfig, flags: &RunFlags, stem: &str) -> Result<ResultsDoc, CliError> {
    let seed = flags.seed.or(config.seed).or_else(env_seed).unwrap_or(DEFAULT_SEED);
    let trials = flags.trials.or(config.trials).unwrap_or(oodle_core::risk::DEFAULT_TRIALS);

    let started = now_unix();
    let doc = with_thread_pool(flags.threads, || execute(config, seed, trials))?;
    let finished = now_unix();

    let out_dir = flags
        .out_dir
        .clone()
        .or_else(|| config.output.as_ref().and_then(|o| o.dir.clone().map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Run(format!("{}: {e}", out_dir.display())))?;

    let format = flags.format.or(config.output.as_ref().and_then(|o| o.format));
    let rows = doc.rows(config.kind, trials, seed);
    if format != Some(OutputFormat::Json) {
        emit_csv(&rows, &out_dir.join(format!("{stem}.csv")))?;
    }
    if format != Some(OutputFormat::Csv) {
        emit_json(&doc, &out_dir.join(format!("{stem}.json")))?;
    }
    if config.output.as_ref().is_some_and(|o| o.plot) {
        emit_plotdata(&doc, &out_dir, stem)?;
    }
    emit_run_record(
        &RunRecord {
            config_hash: config.semantic_hash(),
            artifact_version: format!("oodle {}", env!("CARGO_PKG_VERSION")),
            seed,
            trials,
            started_unix: started,
            finished_unix: finished,
            results: doc.clone(),
        },
        &out_dir.join(format!("{stem}_run_record.json")),
    )?;

    let mut stdout = std::io::stdout().lock();
    render_table(&doc, &mut stdout).map_err(|e| CliError::Run(e.to_string()))?;
    Ok(doc)
}

fn with_thread_pool<T>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError>
where
    T: Send,
{
    match threads {
        None => f(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Run(e.to_string()))?
            .install(f),
    }
}

fn dispatch() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, flags } => {
            let parsed = load_config(&config)?;
            let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
            let doc = run_config(&parsed, &flags, stem)?;
            if let Some(name) = doc.verification_failure() {
                return Err(CliError::VerificationFailed(name));
            }
            Ok(())
        }
        Command::Sweep { config, flags } => {
            let parsed = load_config(&config)?;
            if parsed.kind != ExperimentKind::Sweep {
                return Err(CliError::Config(format!(
                    "`oodle sweep` needs kind = \"sweep\", got \"{}\"",
                    parsed.kind.name()
                )));
            }
            let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
            run_config(&parsed, &flags, stem)?;
            Ok(())
        }
        Command::Verify { theorem, flags } => {
            let (kind, stem) = match theorem {
                TheoremName::Thm1 => (ExperimentKind::VerifyThm1, "thm1"),
                TheoremName::Thm2 => (ExperimentKind::VerifyThm2, "thm2"),
            };
            let config = ExperimentConfig {
                kind,
                seed: None,
                trials: None,
                excess: false,
                eval: None,
                world: None,
                learner: None,
                plan: None,
                base_plan: None,
                schedule: None,
                tasks: None,
                weights: None,
                probe: None,
                grid: None,
                chain: None,
                output: None,
            };
            let doc = run_config(&config, &flags, stem)?;
            if let Some(name) = doc.verification_failure() {
                return Err(CliError::VerificationFailed(name));
            }
            Ok(())
        }
        Command::Metrics { results } => {
            let text = std::fs::read_to_string(&results)
                .map_err(|e| CliError::Run(format!("{}: {e}", results.display())))?;
            let doc: ResultsDoc = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", results.display())))?;
            let mut stdout = std::io::stdout().lock();
            render_table(&doc, &mut stdout).map_err(|e| CliError::Run(e.to_string()))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("oodle: {e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                CliError::VerificationFailed(_) => ExitCode::from(3),
                CliError::Run(_) => ExitCode::from(1),
            }
        }
    }
}

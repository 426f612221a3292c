use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lsx_cli::commands::{self, TrainMode};
use lsx_cli::{exit_code, ExperimentConfig, UsageError};

#[derive(Parser)]
#[command(name = "lsx", version, about = "Learning by self-explaining experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ModeFlags {
    /// Train with the explain/reflect/revise loop.
    #[arg(long)]
    lsx: bool,
    /// Train the classifier alone with the same epoch budget.
    #[arg(long)]
    vanilla: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write a run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        mode: ModeFlags,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Re-evaluate a run and append a metrics row.
    Eval {
        run: PathBuf,
        /// A cache file written by gen-data to evaluate on instead.
        #[arg(long)]
        test_data: Option<PathBuf>,
    },
    /// Aggregate runs into mean/std tables and a chart.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
    /// Write explanations for N random samples per class.
    Dump {
        run: PathBuf,
        #[arg(long, default_value_t = 4)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Generate the experiment's datasets into cache files.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        overwrite: bool,
    },
}

fn set_threads() -> Result<()> {
    let Ok(v) = std::env::var("LSX_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("LSX_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")
}

fn run(cli: Cli) -> Result<()> {
    set_threads()?;
    match cli.command {
        Command::Train {
            config,
            mode,
            seed,
            out,
            overwrite,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let mode = if mode.lsx { TrainMode::Lsx } else { TrainMode::Vanilla };
            let o = commands::train(&cfg, mode, seed, out.as_deref(), overwrite)?;
            let r = &o.report;
            println!(
                "{}: accuracy {:.2} ridge {:.2} iies {:.4} comp {:.2} suff {:.2} -> {}",
                r.label,
                r.accuracy,
                r.ridge_accuracy,
                r.iies,
                r.comp,
                r.suff,
                o.dir.display()
            );
        }
        Command::Eval { run, test_data } => {
            let r = commands::eval(&run, test_data.as_deref())?;
            println!("{}", r.csv_row());
        }
        Command::Report { runs, out, overwrite } => {
            let aggs = commands::report(&runs, &out, overwrite)?;
            print!("{}", commands::aggregate_csv(&aggs));
        }
        Command::Dump {
            run,
            per_class,
            seed,
            out,
            overwrite,
        } => {
            let (dir, n) = commands::dump(&run, per_class, seed, out.as_deref(), overwrite)?;
            println!("wrote {n} files to {}", dir.display());
        }
        Command::GenData { config, out, overwrite } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (dir, hash) = commands::gen_data(&cfg, out.as_deref(), overwrite)?;
            println!("{hash} {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

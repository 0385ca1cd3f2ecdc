use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use iaora::cli::{load_config, run_experiment};
use iaora::engine::with_workers;

#[derive(Parser)]
#[command(name = "iaora", version, about = "IA-ORA random access simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV and summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `output`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; defaults to the number of CPUs.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> iaora::Result<()> {
    match cli.command {
        Command::Validate { config } => {
            let c = load_config(&config)?;
            println!("{}: valid {} config", config.display(), c.experiment);
        }
        Command::Run {
            config,
            output,
            seed,
            workers,
        } => {
            let mut c = load_config(&config)?;
            if let Some(o) = output {
                c.output = o;
            }
            if let Some(s) = seed {
                c.seed = s;
            }
            let workers = workers.unwrap_or_else(|| {
                std::thread::available_parallelism().map_or(1, |n| n.get())
            });
            let report = with_workers(workers, || run_experiment(&c))??;
            let summary_path = report.write(&c.output)?;
            print!("{}", report.summary);
            println!(
                "\nwrote {} rows to {} (summary: {})",
                report.rows.len(),
                c.output.display(),
                summary_path.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use streamformer::cli::{self, parse_experiment_config, parse_grid, CliError};
use streamformer::data::convert_csv_to_oclf;

#[derive(Parser)]
#[command(name = "streamformer", about = "Online continual learning runs over example streams")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a training run per configured data seed.
    Run {
        /// Experiment config file (`key = value` schema).
        config: PathBuf,
        /// Override run.output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override run.data_seeds with a single seed.
        #[arg(long)]
        data_seed: Option<u64>,
        /// Override run.model_seed.
        #[arg(long)]
        model_seed: Option<u64>,
    },
    /// Run a hyperparameter grid and emit its non-dominated front.
    Sweep {
        config: PathBuf,
        /// Grid file listing comma-separated values per hyperparameter.
        grid: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Score the recent-window label baseline on a feature file.
    Oracle {
        /// OCLF feature file.
        file: PathBuf,
        /// Window size W (most recent labels considered).
        #[arg(long)]
        window: usize,
    },
    /// Convert `label, f1, ..., fF` CSV rows to an OCLF feature file.
    Convert { csv: PathBuf, oclf: PathBuf },
}

fn execute(args: Args) -> Result<(), CliError> {
    match args.command {
        Command::Run { config, output_dir, data_seed, model_seed } => {
            let mut config = parse_experiment_config(&config)?;
            if let Some(dir) = output_dir {
                config.run.output_dir = dir;
            }
            if let Some(seed) = data_seed {
                config.run.data_seeds = vec![seed];
            }
            if let Some(seed) = model_seed {
                config.run.model_seed = seed;
            }
            let results = cli::run(&config)?;
            for r in &results {
                println!(
                    "seed {}: accuracy {:.4}, cumulative nll {:.2}, macs {}",
                    r.data_seed,
                    r.summary.average_accuracy,
                    r.summary.cumulative_nll,
                    r.summary.macs_total
                );
            }
            println!("wrote {}", config.run.output_dir.display());
            Ok(())
        }
        Command::Sweep { config, grid, output_dir } => {
            let mut config = parse_experiment_config(&config)?;
            if let Some(dir) = output_dir {
                config.run.output_dir = dir;
            }
            let grid = parse_grid(&grid)?;
            let outcomes = cli::sweep(&config, &grid)?;
            let ok = outcomes.iter().filter(|p| p.result.is_ok()).count();
            println!("swept {} points ({ok} ok)", outcomes.len());
            println!("wrote {}", config.run.output_dir.display());
            Ok(())
        }
        Command::Oracle { file, window } => {
            let acc = cli::oracle_accuracy(&file, window)?;
            println!("window = {window}");
            println!("accuracy = {acc:.6}");
            Ok(())
        }
        Command::Convert { csv, oclf } => {
            convert_csv_to_oclf(&csv, &oclf)?;
            println!("wrote {}", oclf.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

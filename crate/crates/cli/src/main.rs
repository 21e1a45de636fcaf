//! `lsw <task> --config <file> [--order N] [--epsilon X] [--out prefix]`

mod config;
mod error;
mod output;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Overrides, Run, Task};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "lsw", version, about = "Effective Liouvillians by Schrieffer-Wolff elimination of fast modes")]
struct Cli {
    task: Task,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Perturbation order, 1 to 8.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Output path prefix; files are named `<prefix>_<table>.csv`.
    #[arg(long)]
    out: Option<String>,
}

fn execute(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = config::load(&cli.config)?;
    let run = Run::new(
        cli.task,
        cfg,
        Overrides {
            order: cli.order,
            epsilon: cli.epsilon,
            out: cli.out,
        },
    )?;
    let tables = tasks::run(&run)?;
    output::write_all(&run.output, &tables)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            let kind = if code == 2 { "invalid input" } else { "numerical failure" };
            eprintln!("lsw: {kind}: {e}");
            ExitCode::from(code)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod error;
mod runner;
mod scenario;

use scenario::Scenario;

#[derive(Parser)]
#[command(name = "actuator", version, about = "Optimal actuator design for the controlled heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run { config: PathBuf },
    /// List the built-in initial conditions and diffusion profiles.
    Catalog,
    /// Check a scenario file without solving anything.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Catalog => {
            print!("{}", actuator_core::catalog::list_catalog());
            Ok(())
        }
        Command::Validate { config } => Scenario::load(&config).map(|_| println!("{}: ok", config.display())),
        Command::Run { config } => Scenario::load(&config).and_then(|s| {
            let dir = runner::output_dir(&s, &config);
            runner::run(&s, dir.clone())?;
            println!("wrote {}", dir.display());
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ error::CliError::Schema { .. }) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

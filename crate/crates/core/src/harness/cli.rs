use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::{obtain_population, regenerate_reports, run_study, write_reports, StudyConfig};
use crate::dgp::save_population;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "hetsim", version, about = "Empirical Monte Carlo study of heterogeneous treatment effect estimators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the population described by a config and save it to a directory.
    BuildPop {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the study and write tensors, manifest and reports.
    Run { config: PathBuf },
    /// Regenerate the report tables of a finished study directory.
    Report { dir: PathBuf },
    /// Check a config and print the effective settings.
    ValidateConfig { config: PathBuf },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildPop { config, out } => {
            let cfg = StudyConfig::load(&config)?;
            let pop = obtain_population(&cfg)?;
            save_population(&pop, &out)?;
            println!(
                "wrote {} units ({} validation, {} groups) to {}",
                pop.n(),
                pop.validation_rows.len(),
                pop.groups.n_groups(),
                out.display()
            );
        }
        Command::Run { config } => {
            let cfg = StudyConfig::load(&config)?;
            let result = run_study(&cfg)?;
            write_reports(&result, &cfg.output_dir)?;
            print!("{}", std::fs::read_to_string(cfg.output_dir.join("report.txt")).unwrap_or_default());
            log::info!("study finished in {:.1} s", result.wall_seconds);
        }
        Command::Report { dir } => {
            regenerate_reports(&dir)?;
            print!("{}", std::fs::read_to_string(dir.join("report.txt")).unwrap_or_default());
        }
        Command::ValidateConfig { config } => {
            let cfg = StudyConfig::load(&config)?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

/// Parse `args` (program name first) and run the command; returns the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

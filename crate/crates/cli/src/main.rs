mod cli;
mod commands;
mod error;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use cli::{Cli, Command};
use error::{CliError, CliResult};

fn run(cli: Cli) -> CliResult<()> {
    let mut command = cli.command;
    command.absolutize()?;
    let cfg = commands::resolve_config(&cli.common)?;
    let out_dir: PathBuf = cfg.output_dir.clone().ok_or_else(|| {
        CliError::Usage("no output directory: pass --out or set output_dir".into())
    })?;
    match &command {
        Command::Replay { manifest } => {
            let summary = manifest::replay(manifest, &out_dir)?;
            println!("{summary}");
        }
        _ => {
            let m = manifest::run_recorded(&command, &cfg, &out_dir)?;
            println!(
                "{}",
                serde_json::json!({
                    "command": command.name(),
                    "output_dir": out_dir.display().to_string(),
                    "outputs": m.outputs.len(),
                })
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

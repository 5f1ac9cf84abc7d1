mod args;
mod commands;

use std::fs;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Rejected;

fn run(cli: Cli) -> anyhow::Result<(String, Option<std::path::PathBuf>)> {
    let (text, out) = match cli.command {
        Command::Validate { model } => (commands::validate(&model)?, None),
        Command::Infer { model, run } => (commands::infer(&model, &run)?, run.out),
        Command::Sweep { model, run } => (commands::sweep(&model, &run)?, run.out),
        Command::Asymptotic { model, run } => (commands::asymptotic(&model, &run)?, run.out),
        Command::Sample { model, run } => (commands::sample(&model, &run)?, run.out),
        Command::Learn { model, data, run } => (commands::learn(&model, &data, &run)?, run.out),
        Command::Convert { model, run, to } => (commands::convert_model(&model, &run, to)?, run.out),
    };
    Ok((text, out))
}

/// 1 for user and validation errors, 2 for feasibility limits, 3 for
/// numeric or conditioning failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    use relscale::Error;
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::StateSpaceTooLarge { .. } | Error::NotFactorizable(_)) => 2,
        Some(Error::ZeroProbabilityEvidence) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((text, None)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Ok((text, Some(path))) => match fs::write(&path, text) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: cannot write {}: {e}", path.display());
                ExitCode::from(1)
            }
        },
        Err(err) => {
            if let Some(Rejected(report)) = err.downcast_ref::<Rejected>() {
                print!("{report}");
                return ExitCode::from(1);
            }
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

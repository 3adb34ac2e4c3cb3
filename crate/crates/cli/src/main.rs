mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

fn parse(argv: &[String]) -> Result<Cli, ExitCode> {
    match Cli::try_parse_from(argv) {
        Ok(cli) => Ok(cli),
        Err(e) => {
            let _ = e.print();
            Err(match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(EXIT_VALIDATION),
            })
        }
    }
}

fn run(argv: Vec<String>) -> ExitCode {
    let argv = match config::find_path(&argv) {
        Some(path) => match config::merge(&argv, &path) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_VALIDATION);
            }
        },
        None => argv,
    };
    let cli = match parse(&argv) {
        Ok(cli) => cli,
        Err(code) => return code,
    };

    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_VALIDATION);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(EXIT_NUMERICAL)
            } else {
                ExitCode::from(EXIT_VALIDATION)
            }
        }
    }
}

fn main() -> ExitCode {
    run(std::env::args().collect())
}

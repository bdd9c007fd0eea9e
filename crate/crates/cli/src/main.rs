use std::process::ExitCode;

use crof_cli::{exit_code, run, CliError};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => e.exit(),
        Err(CliError::Core(e)) => {
            eprintln!("crof: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

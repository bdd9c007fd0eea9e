//! The `crof` command line: dataset generation, noise injection, prompt
//! fusion, training, sweeps and weight inspection over CROFEMB1 files.

use std::ffi::OsString;

use clap::{ArgMatches, CommandFactory, FromArgMatches};

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod settings;

pub use args::{Cli, Command};
pub use commands::{
    cmd_fuse, cmd_gen_synth, cmd_inject_noise, cmd_prompt_request, cmd_sweep, cmd_train,
    cmd_weights,
};
pub use error::{exit_code, CliError};

/// Parsed arguments together with the subcommand's matches, which record
/// whether each flag was given explicitly.
#[derive(Debug)]
pub struct Invocation {
    pub cli: Cli,
    matches: ArgMatches,
}

impl Invocation {
    pub fn parse_from<I, T>(argv: I) -> Result<Self, clap::Error>
    where
        I: IntoIterator<Item = T>,
        T: Into<OsString> + Clone,
    {
        let matches = Cli::command().try_get_matches_from(argv)?;
        let cli = Cli::from_arg_matches(&matches)?;
        Ok(Self { cli, matches })
    }

    pub fn sub_matches(&self) -> &ArgMatches {
        self.matches
            .subcommand()
            .map(|(_, m)| m)
            .expect("a subcommand is required")
    }

    pub fn run(&self) -> Result<(), CliError> {
        let m = self.sub_matches();
        match &self.cli.command {
            Command::GenSynth(a) => cmd_gen_synth(a)?,
            Command::InjectNoise(a) => cmd_inject_noise(a)?,
            Command::Fuse(a) => cmd_fuse(a)?,
            Command::PromptRequest(a) => cmd_prompt_request(a)?,
            Command::Train(a) => {
                cmd_train(a, m)?;
            }
            Command::Sweep(a) => {
                cmd_sweep(a, m)?;
            }
            Command::Weights(a) => cmd_weights(a)?,
        }
        Ok(())
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Invocation::parse_from(argv)?.run()
}

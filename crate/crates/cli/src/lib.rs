//! `ese` command-line pipeline. The library surface exists so integration
//! tests can drive commands in-process; `main` is a thin exit-code shell.

pub mod commands;
pub mod config;
pub mod digits;

use clap::error::ErrorKind;
use clap::Parser;
use ese_core::error::{Error, Result};

pub use commands::Cli;

/// Parses and dispatches one invocation. Help/version requests are handled
/// here and succeed; anything clap rejects becomes a validation error.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::InvalidConfig(e.to_string())),
    };
    commands::dispatch(cli)
}

/// 1 for validation failures, 2 for numeric ones.
pub fn exit_code_for(err: &Error) -> u8 {
    if err.is_numeric() {
        2
    } else {
        1
    }
}

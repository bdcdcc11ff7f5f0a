//! The `himol` command line.

pub mod commands;
pub mod settings;
pub mod split;

use clap::{Arg, ArgMatches, Command};
use std::ffi::OsString;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    /// Bad flags, settings or input files.
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

pub fn command() -> Command {
    let mut cmd = Command::new("himol")
        .about("Hierarchical textual inversion for molecule generation")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("Settings file with `key = value` lines; flags take precedence"),
        )
        .arg(
            Arg::new("jobs")
                .long("jobs")
                .global(true)
                .value_name("N")
                .value_parser(clap::value_parser!(usize))
                .help("Worker threads [default: available cores]"),
        );
    for (name, about, keys) in commands::SUBCOMMANDS {
        let mut sub = Command::new(*name).about(*about);
        for k in *keys {
            sub = sub.arg(k.arg());
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

fn dispatch(matches: &ArgMatches) -> Result<(), CliError> {
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let keys = commands::SUBCOMMANDS
        .iter()
        .find(|c| c.0 == name)
        .map(|c| c.2)
        .expect("registered subcommand");
    let config = match sub.get_one::<String>("config") {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| CliError::User(format!("{path}: {e}")))?),
        None => None,
    };
    let settings = settings::Settings::resolve(keys, config.as_deref(), sub)?;
    let jobs = sub.get_one::<usize>("jobs").copied().unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    pool.install(|| commands::run(name, &settings))
}

/// Parse `args` (including the program name) and run. Returns the process
/// exit code: 0 on success, 1 on user error, 2 on internal error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&matches) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! `credigraph`: builds domain graphs from web-archive crawls and runs the
//! text-regression baselines on them.

mod commands;
mod config;
mod error;
mod job;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "credigraph", version, about = "Domain-level web graphs with credibility labels")]
struct Cli {
    /// TOML settings file; explicit flags take precedence over it.
    #[arg(long, global = true, env = "CREDIGRAPH_CONFIG")]
    config: Option<PathBuf>,
    /// Worker threads for batch-parallel stages.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Recompute even when an identical earlier run is recorded.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: commands::Command,
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("CREDIGRAPH_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_current_span(false)
        .try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(error::EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    init_logging();
    let run = || -> anyhow::Result<()> {
        let mut config = Config::load(cli.config.as_deref())?;
        if let Some(w) = cli.workers {
            config.workers = w;
        }
        let ctx = commands::Context { config, force: cli.force };
        commands::run(cli.command, &ctx)
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!(error = %format!("{e:#}"), "failed");
            eprintln!("error: {e:#}");
            error::exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        let e = Cli::try_parse_from(["credigraph", "stats", "--bogus"]).unwrap_err();
        assert!(e.use_stderr());
        let e = Cli::try_parse_from(["credigraph", "--help"]).unwrap_err();
        assert!(!e.use_stderr());
    }
}

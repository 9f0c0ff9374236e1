mod args;
mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::RunConfig;
use error::CliError;
use output::Sink;

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads == Some(0) {
        return Err(CliError::usage("--threads must be positive"));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::usage(format!("cannot start worker pool: {e}")))?;
    let threads = pool.current_num_threads();
    let out_dir = cli.out_dir.as_ref().map(|p| p.display().to_string());
    let name = match &cli.command {
        Command::Fit(_) => "fit",
        Command::Profile(_) => "profile",
        Command::Nuisance(_) => "nuisance",
        Command::Multiscale(_) => "multiscale",
        Command::Synth(_) => "synth",
    };
    let cfg = RunConfig::new(name, cli.format, out_dir, threads);
    let mut sink = Sink::new(cli.out_dir.clone(), cli.format)?;
    pool.install(|| match &cli.command {
        Command::Fit(a) => commands::fit(a, cfg, &mut sink),
        Command::Profile(a) => commands::profile(a, cfg, &mut sink),
        Command::Nuisance(a) => commands::nuisance(a, cfg, &mut sink),
        Command::Multiscale(a) => commands::multiscale(a, cfg, &mut sink),
        Command::Synth(a) => commands::synth(a, cfg, &mut sink),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(error::exit::SUCCESS as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}

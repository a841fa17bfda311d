mod args;
mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Context;
use config::ConfigFile;
use error::CliError;

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let seed = config.pick(cli.seed, "seed", 42)?;
    let threads = config.pick_opt(cli.threads, "threads")?;
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let ctx = Context { config, seed, threads };
    match cli.command {
        Command::Ingest(a) => commands::ingest(&ctx, a),
        Command::BuildIndex(a) => commands::build_index(&ctx, a),
        Command::Classify(a) => commands::classify(&ctx, a),
        Command::Evaluate(a) => commands::evaluate_cmd(&ctx, a),
        Command::Stats(a) => commands::stats(&ctx, a),
        Command::Ablate(a) => commands::ablate_cmd(&ctx, a),
        Command::ServeStub(a) => commands::serve_stub(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code != 0 {
                eprintln!("{}", CliError::Usage(e.kind().to_string()).to_json());
            }
            return ExitCode::from(code as u8);
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

mod cli;
mod commands;
mod run;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use cli::{AttackCommand, Cli, Command, ExperimentCommand};
use commands::Global;

/// Bad invocation or missing input; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let global = Global {
        out: &cli.out,
        label: cli.label.as_deref(),
        seed: cli.seed,
    };
    let result = match &cli.command {
        Command::BuildTable(a) => commands::build_table_cmd(&global, a),
        Command::Tag(a) => commands::tag_cmd(&global, a),
        Command::Stats(a) => commands::stats_cmd(&global, a),
        Command::Attack(AttackCommand::Fingerprint(a)) => commands::fingerprint_cmd(&global, a),
        Command::Attack(AttackCommand::Frequency(a)) => commands::frequency_cmd(&global, a),
        Command::Attack(AttackCommand::Chain(a)) => commands::chain_cmd(&global, a),
        Command::Attack(AttackCommand::GraphMatch(a)) => commands::graph_match_cmd(&global, a),
        Command::Attack(AttackCommand::Dictionary(a)) => commands::dictionary_cmd(&global, a),
        Command::Experiment(ExperimentCommand::Sweep(a)) => commands::sweep_cmd(&global, a),
    };
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

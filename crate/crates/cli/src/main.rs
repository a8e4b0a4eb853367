mod args;
mod commands;
mod config;

use std::fmt;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use args::{Cli, Command};
use config::Config;

/// Marks errors caused by unreadable or invalid input (exit status 2).
#[derive(Debug)]
pub struct BadInput(pub String);

impl fmt::Display for BadInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BadInput {}

pub enum Outcome {
    Ok,
    /// A requested threshold check did not hold (exit status 3).
    CheckFailed,
}

fn run(cli: Cli) -> Result<Outcome> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let json = cli.json;
    match &cli.command {
        Command::Propose(c) => commands::propose(c, cfg),
        Command::Crop(c) => commands::crop(c, cfg),
        Command::TrainCnn(c) => commands::train_cnn(c, cfg, json),
        Command::TrainSvm(c) => commands::train_svm(c, cfg, json),
        Command::Detect(c) => commands::detect_cmd(c, cfg),
        Command::Eval(c) => commands::eval(c, cfg, json),
        Command::Bench(c) => commands::bench_cmd(c, cfg, json),
        Command::Gradcheck(c) => commands::gradcheck(c, cfg, json),
        Command::Render(c) => commands::render_cmd(c, cfg),
        Command::Synth(c) => commands::synth(c, cfg),
    }
}

fn main() -> ExitCode {
    // clap reports usage errors itself with status 2.
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<BadInput>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

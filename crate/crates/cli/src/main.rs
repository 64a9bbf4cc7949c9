//! `spreadlab` command-line runner.
//!
//! Exit status: 0 on success, 2 when a checked bound is violated, 1 on usage,
//! input or capacity errors. Errors go to standard error as one JSON object.

mod args;
mod commands;
mod config;
mod error;
mod family;
mod report;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::{CliError, ErrorReport};
use report::{resolve_budget, write_all, Metadata, Output, Summary, BUDGET_ENV, SCHEMA};

fn name(c: &Command) -> &'static str {
    match c {
        Command::SpreadCheck(_) => "spread-check",
        Command::PlantedSim(_) => "planted-sim",
        Command::Moments(_) => "moments",
        Command::CouplingRun(_) => "coupling-run",
        Command::ThresholdSweep(_) => "threshold-sweep",
        Command::MatchingDemo(_) => "matching-demo",
        Command::FamilyGen(_) => "family-gen",
        Command::Run(_) => "run",
    }
}

fn common(c: &Command) -> Option<&args::CommonArgs> {
    match c {
        Command::SpreadCheck(a) => Some(&a.common),
        Command::PlantedSim(a) => Some(&a.common),
        Command::Moments(a) => Some(&a.common),
        Command::CouplingRun(a) => Some(&a.common),
        Command::ThresholdSweep(a) => Some(&a.common),
        Command::MatchingDemo(a) => Some(&a.common),
        Command::FamilyGen(a) => Some(&a.common),
        Command::Run(_) => None,
    }
}

fn load_config(path: &std::path::Path) -> Result<Command, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let argv = config::to_argv(&text)?;
    Cli::try_parse_from(argv)
        .map(|cli| cli.command)
        .map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.kind_message())))
}

trait KindMessage {
    fn kind_message(&self) -> String;
}

impl KindMessage for clap::Error {
    fn kind_message(&self) -> String {
        self.render().to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string()
    }
}

/// Runs one command and writes its outputs. Returns whether a bound failed.
fn execute(command: Command) -> Result<bool, CliError> {
    let command = match command {
        Command::Run(r) => load_config(&r.config)?,
        c => c,
    };
    let common = common(&command).expect("config commands are resolved above");
    let env = std::env::var(BUDGET_ENV).ok();
    let budget = resolve_budget(&common.budget, env.as_deref())?;
    let out: Output = match &command {
        Command::SpreadCheck(a) => commands::spread_check(a, &budget)?,
        Command::PlantedSim(a) => commands::planted_sim(a, &budget)?,
        Command::Moments(a) => commands::moments(a, &budget)?,
        Command::CouplingRun(a) => commands::coupling_run(a, &budget)?,
        Command::ThresholdSweep(a) => commands::sweep(a, &budget)?,
        Command::MatchingDemo(a) => commands::matching_demo(a, &budget)?,
        Command::FamilyGen(a) => commands::family_gen(a, &budget)?,
        Command::Run(_) => unreachable!(),
    };
    let violated = out.checks.violated;
    let summary = Summary {
        schema: SCHEMA,
        command: name(&command),
        metadata: Metadata {
            tool: "spreadlab",
            version: env!("CARGO_PKG_VERSION"),
            log: "natural",
            budget: (&budget).into(),
            args: &command,
        },
        checks: out.checks,
        result: out.result,
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    let mut files = out.files;
    let to_stdout = match &common.out {
        Some(path) => {
            files.push((path.clone(), json.into_bytes()));
            None
        }
        None => Some(json),
    };
    write_all(&files)?;
    let text = out.stdout_override.or(to_stdout);
    if let Some(text) = text {
        let mut stdout = std::io::stdout().lock();
        stdout
            .write_all(text.as_bytes())
            .and_then(|_| stdout.flush())
            .map_err(|e| CliError::io("<stdout>", e))?;
    }
    Ok(violated)
}

fn fail(e: &CliError) -> ExitCode {
    let body = serde_json::to_string(&ErrorReport::new(e)).unwrap_or_else(|_| format!("{{\"schema\":1,\"error\":{{\"kind\":\"internal\",\"message\":{:?}}}}}", e.to_string()));
    eprintln!("{body}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::Usage(e.kind_message())),
    };
    match execute(cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => fail(&e),
    }
}

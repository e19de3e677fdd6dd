//! `fracgame`: runs the verification suites on a JSON scenario.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
mod run;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracgame_core::{CheckReport, Grade};
use serde_json::json;

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "fracgame", version, about = "Verification suites for fractional differential games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Standing assumptions on the game data and the path library.
    Validate,
    /// Trajectories under constant controls and the Mittag-Leffler comparison.
    Simulate,
    /// Scenario-tree values, DPP residuals, boundary and condition (L).
    Value,
    /// The penalty-functional lemma harness.
    Lemmas,
    /// Viscosity sub/super-solution checks of the tree values.
    Viscosity,
    /// Doubling-of-variables diagnostic.
    Doubling,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Value => "value",
            Command::Lemmas => "lemmas",
            Command::Viscosity => "viscosity",
            Command::Doubling => "doubling",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_outputs(
    dir: &Path,
    command: Command,
    sc: &config::Scenario,
    outcome: run::Outcome,
) -> Result<u8, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let reports: Vec<CheckReport> = outcome
        .reports
        .into_iter()
        .map(|r| r.with_scenario(&sc.digest))
        .collect();
    let failures = reports.iter().filter(|r| r.is_failure()).count();
    let count = |g: Grade| reports.iter().filter(|r| r.grade == g).count();
    let code = if failures > 0 { 1 } else { 0 };

    let path = dir.join("reports.jsonl");
    fs::write(&path, fracgame_core::report::to_jsonl(&reports)).map_err(io_err(&path))?;

    let summary = json!({
        "subcommand": command.name(),
        "scenario": sc.digest,
        "seed": sc.seed,
        "config": sc.config,
        "reports": reports.len(),
        "assertions": count(Grade::Assertion),
        "diagnostics": count(Grade::Diagnostic),
        "inconclusive": count(Grade::Inconclusive),
        "assertion_failures": failures,
        "failed": reports.iter().filter(|r| r.is_failure()).map(|r| &r.lemma).collect::<Vec<_>>(),
        "exit_code": code,
        "details": outcome.details,
    });
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;

    let path = dir.join("trace.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["scenario".to_string()];
    header.extend(outcome.trace_header);
    w.write_record(&header)?;
    for row in outcome.trace {
        let mut rec = vec![sc.digest.clone()];
        rec.extend(row);
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(code)
}

fn execute(cli: &Cli) -> Result<u8, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config {
        line: 0,
        message: "--config PATH is required".into(),
    })?;
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let sc = config::load(&text, cli.seed)?;
    let out = cli
        .out
        .clone()
        .or_else(|| sc.config.output.clone())
        .unwrap_or_else(|| PathBuf::from("fracgame-out"));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool.build().map_err(|e| CliError::Config {
        line: 0,
        message: format!("worker pool: {e}"),
    })?;
    let outcome = pool.install(|| match cli.command {
        Command::Validate => run::validate(&sc),
        Command::Simulate => run::simulate(&sc),
        Command::Value => run::value(&sc),
        Command::Lemmas => run::lemmas(&sc),
        Command::Viscosity => run::viscosity(&sc),
        Command::Doubling => run::doubling(&sc),
    })?;
    write_outputs(&out, cli.command, &sc, outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("fracgame: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

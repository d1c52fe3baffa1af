//! Command line front door: run instance files, verify property suites,
//! simulate embedded games, and print exact outcome distributions.
//!
//! Exit codes: 0 on success, 1 when a verified property fails (the report
//! carries the witness), 2 on usage, parse, or validation errors.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use derand::instance::{exact_dist, parse_instance, run_instance, simulate_instance};
use derand::suites::{run_suite, suite_names, SuiteConfig, SuiteReport};

#[derive(Parser)]
#[command(name = "derand", version, about = "Deterministic mechanism toolkit")]
struct Cli {
    /// Output format for reports and transcripts.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the mechanism an instance file describes and print the
    /// transcript. Identical files produce byte-identical output.
    Run { file: PathBuf },
    /// Run a named verification suite (or "all"). Exits 1 if any property
    /// fails; the report lists witnesses.
    Verify {
        /// Suite name; `derand verify list` prints the available names.
        suite: String,
        /// Cap on the instance size the suite sweeps.
        #[arg(long)]
        n: Option<usize>,
        /// Sample count for the randomized part of the suite.
        #[arg(long)]
        samples: Option<u64>,
        /// Seed for the suite's generators (defaults to a fixed constant;
        /// environment variables are never consulted).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Monte Carlo sample the instance's embedded game and tally the
    /// mechanism outcomes it induces.
    Simulate {
        file: PathBuf,
        #[arg(long)]
        trials: u64,
        /// Master seed; required so every report is reproducible.
        #[arg(long)]
        seed: u64,
        /// Worker threads; the tally is identical for every worker count.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Print the exact outcome distribution of the instance's embedded game
    /// under its policies (all-uniform when none are given).
    ExactDist { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run { file } => {
            let out = run_instance(&load(&file)?).map_err(|e| e.to_string())?;
            emit(&out, cli.format);
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suite, n, samples, seed } => {
            if suite == "list" {
                for name in suite_names() {
                    println!("{name}");
                }
                return Ok(ExitCode::SUCCESS);
            }
            let cfg = SuiteConfig { n, samples, seed };
            let reports: Vec<SuiteReport> = if suite == "all" {
                suite_names()
                    .iter()
                    .map(|name| run_suite(name, &cfg))
                    .collect::<Result<_, _>>()
            } else {
                run_suite(&suite, &cfg).map(|r| vec![r])
            }
            .map_err(|e| e.to_string())?;

            let pass = reports.iter().all(|r| r.pass);
            let value = if reports.len() == 1 {
                serde_json::to_value(&reports[0])
            } else {
                serde_json::to_value(&reports)
            }
            .expect("reports serialize");
            emit(&value, cli.format);
            Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Simulate { file, trials, seed, workers } => {
            let report = simulate_instance(&load(&file)?, trials, seed, workers)
                .map_err(|e| e.to_string())?;
            let value = serde_json::to_value(&report).expect("report serializes");
            emit(&value, cli.format);
            Ok(ExitCode::SUCCESS)
        }
        Command::ExactDist { file } => {
            let out = exact_dist(&load(&file)?).map_err(|e| e.to_string())?;
            emit(&out, cli.format);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load(file: &PathBuf) -> Result<derand::instance::InstanceFile, String> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| format!("cannot read {}: {e}", file.display()))?;
    parse_instance(&text).map_err(|e| e.to_string())
}

fn emit(value: &Value, format: Format) {
    match format {
        Format::Json => println!("{}", serde_json::to_string(value).expect("JSON value")),
        Format::Table => print!("{}", render_table(value)),
    }
}

/// Flatten a JSON document into `path = value` lines; arrays of scalars stay
/// on one line, nested structures extend the path.
fn render_table(value: &Value) -> String {
    let mut out = String::new();
    push_lines("", value, &mut out);
    out
}

fn push_lines(prefix: &str, value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            for (key, inner) in map {
                let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
                push_lines(&path, inner, out);
            }
        }
        Value::Array(items) if items.iter().any(|i| i.is_object() || i.is_array()) => {
            for (index, inner) in items.iter().enumerate() {
                push_lines(&format!("{prefix}[{index}]"), inner, out);
            }
        }
        Value::Array(items) => {
            let row: Vec<String> = items.iter().map(scalar).collect();
            let _ = writeln!(out, "{prefix} = [{}]", row.join(", "));
        }
        other => {
            let _ = writeln!(out, "{prefix} = {}", scalar(other));
        }
    }
}

fn scalar(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

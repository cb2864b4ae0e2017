mod commands;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use report::{RunReport, Severity, Timings, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(name = "pfregen", version, about = "Perron-Frobenius eigentriples by regeneration")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Regeneration state (0-based).
    #[arg(long, global = true)]
    pub z: Option<usize>,
    /// Root-finding tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// RNG seed; a fresh one is drawn and echoed when absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the parallel engines.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact eigentriple with twist and power-limit verification.
    Solve(commands::SolveArgs),
    /// Monte Carlo estimate from simulated regeneration cycles.
    Mc(commands::McArgs),
    /// Irreducibility, period, minorization and abscissa checks.
    Conditions(commands::ConditionsArgs),
    /// Built-in benchmark models.
    #[command(subcommand)]
    Example(ExampleCommand),
}

#[derive(Debug, Subcommand)]
enum ExampleCommand {
    /// Truncated birth-death chain against its closed forms.
    Bd(commands::BdArgs),
    /// Continuous-state kernel against a grid oracle.
    Kernel(commands::KernelArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Upper {
    Killed,
    Reflecting,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Flagship,
    Uniform,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Severity::Usage as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };

    let seed = cli.global.seed.unwrap_or_else(rand::random);
    let mut timings = Timings::default();
    let (name, outcome) = match &cli.command {
        Command::Solve(a) => ("solve", commands::solve(a, &cli.global, seed, &mut timings)),
        Command::Mc(a) => ("mc", commands::mc(a, &cli.global, seed, &mut timings)),
        Command::Conditions(a) => ("conditions", commands::conditions(a, &cli.global, &mut timings)),
        Command::Example(ExampleCommand::Bd(a)) => ("example bd", commands::bd(a, &cli.global, &mut timings)),
        Command::Example(ExampleCommand::Kernel(a)) => {
            ("example kernel", commands::kernel(a, &cli.global, seed, &mut timings))
        }
    };

    let (config, result, extra, error) = match outcome {
        Ok(out) => (out.config, out.result, out.diagnostics, None),
        Err(fail) => (fail.config, serde_json::Value::Null, serde_json::Value::Null, Some(fail.error)),
    };
    let mut diagnostics = serde_json::json!({
        "timings_ms": timings.to_value(),
        "threads": cli.global.threads,
        "version": env!("CARGO_PKG_VERSION"),
    });
    if let serde_json::Value::Object(extra) = extra {
        diagnostics.as_object_mut().expect("object").extend(extra);
    }
    let code = error.as_ref().map_or(0, |e| e.severity as u8);
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        command: name.to_string(),
        config,
        result,
        diagnostics,
        error,
    };

    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    let written = match &cli.global.output {
        Some(path) => std::fs::write(path, &text),
        None => std::io::stdout().write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("pfregen: cannot write report: {e}");
        return ExitCode::from(Severity::Usage as u8);
    }
    if let Some(e) = &report.error {
        eprintln!("pfregen: {}: {}", e.kind, e.message);
    }
    ExitCode::from(code)
}

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod compare;
mod error;
mod generate;
mod output;
mod run;
mod scaling;
mod setup;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

/// Pseudo-marginal MCMC with data subsampling.
#[derive(Parser)]
#[command(name = "subsample-mcmc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from a model specification.
    Generate(Invocation),
    /// Run one chain.
    Run(Invocation),
    /// Run several chains on the same data and compare them against a baseline.
    Compare(Invocation),
    /// Measure the likelihood estimator's fractional error over a grid of subsample sizes.
    ScalingStudy(Invocation),
}

#[derive(Args)]
struct Invocation {
    /// TOML specification, or a manifest.json from an earlier run.
    config: PathBuf,
    /// Override a specification value, e.g. `--set engine.iterations=2000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out_dir = None;
    let result = match &cli.command {
        Command::Generate(a) => generate::cmd_generate(&a.config, &a.overrides, &mut out_dir),
        Command::Run(a) => run::cmd_run(&a.config, &a.overrides, &mut out_dir),
        Command::Compare(a) => compare::cmd_compare(&a.config, &a.overrides, &mut out_dir),
        Command::ScalingStudy(a) => scaling::cmd_scaling(&a.config, &a.overrides, &mut out_dir),
    };
    match result {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(e) => report(&e, out_dir),
    }
}

fn report(e: &CliError, out_dir: Option<PathBuf>) -> ExitCode {
    let body = e.to_json();
    eprintln!("{}", serde_json::to_string_pretty(&body).expect("serializable"));
    // aborted runs already wrote their own error.json next to the partial trace
    if let (Some(dir), false) = (out_dir, matches!(e, CliError::Aborted { .. })) {
        if dir.is_dir() {
            let _ = output::write_atomic(&dir.join("error.json"), &output::json_bytes(&body));
        }
    }
    ExitCode::from(e.exit_code())
}

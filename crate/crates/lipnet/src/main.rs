use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lipnet::experiments::{
    run_audit, run_certify, run_compile, run_fit_toy, run_grad_check, run_train, run_verify, AuditOptions,
    CertifyOptions, CompileOptions, GradCheckOptions, Outcome, ToyOptions, TrainOptions, VerifyOptions,
};
use serde_json::json;

/// 1-Lipschitz networks with N-activations: compile piecewise-linear
/// functions, train and certify classifiers, audit layers.
///
/// Every command prints a JSON report on stdout. Exit status is 0 when all
/// checks pass, 1 when a check fails and 2 on usage or I/O errors.
#[derive(Debug, Parser)]
#[command(name = "lipnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile a function spec into an exact width-2 network.
    Compile(CompileOptions),
    /// Check a network against a function spec.
    Verify(VerifyOptions),
    /// Fit the N-function on [-3, 3] and write history.csv, function.json
    /// and network.json.
    FitToy {
        #[command(flatten)]
        opts: ToyOptions,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier and write checkpoint.json and history.csv.
    Train {
        #[command(flatten)]
        opts: TrainOptions,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Certify a checkpoint on a dataset split and write a per-example CSV.
    Certify {
        #[command(flatten)]
        opts: CertifyOptions,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare reverse-mode gradients of a random network with finite
    /// differences.
    GradCheck(GradCheckOptions),
    /// Lipschitz audit of a checkpoint or of a freshly initialized network.
    Audit(AuditOptions),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: lipnet::Result<Outcome> = match &cli.command {
        Command::Compile(o) => run_compile(o),
        Command::Verify(o) => run_verify(o),
        Command::FitToy { opts, out } => run_fit_toy(opts, out),
        Command::Train { opts, out } => run_train(opts, out),
        Command::Certify { opts, out } => run_certify(opts, out),
        Command::GradCheck(o) => run_grad_check(o),
        Command::Audit(o) => run_audit(o),
    };
    match result {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.report).expect("reports serialize"));
            ExitCode::from(if outcome.passed { 0 } else { 1 })
        }
        Err(e) => {
            let report = json!({"error": e.to_string(), "kind": e.kind()});
            println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

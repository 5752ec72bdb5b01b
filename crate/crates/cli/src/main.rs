use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fbm_exit_cli::{manifest_path, run_with_threads, threads_from_env, CliError, Kind, RunStatus, SpecOverrides};

/// Fractional Brownian motion exit-problem experiments.
///
/// Exit status: 0 success, 1 invalid input, 2 a verification found a
/// violation, 3 runtime or IO error.
#[derive(Parser)]
#[command(name = "fbm-exit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw exact sample paths on [0, T].
    Sample(Common),
    /// P(sup_[0,T] X <= barrier).
    Exit(Common),
    /// P(sup_[0,1] X <= eps).
    LowerTail(Common),
    /// I(T) = E[(int_0^T e^X du)^-1].
    Molchan(Common),
    /// g(T) = E exp(-T^H sup_[0,1] X).
    Laplace(Common),
    /// Per-sample Hölder-window inequality chain.
    Chain(Common),
    /// Per-sample drift-barrier lower bound.
    DriftBound(Common),
    /// One-sided Slepian factorization tests.
    Slepian(Common),
    /// Deterministic sweeps of the appendix inequalities.
    VerifyAppendix(Common),
    /// Fit survival exponents to an exit or lower-tail table.
    Fit(Common),
}

#[derive(Args)]
struct Common {
    /// JSON file with experiment fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    spec: SpecOverrides,
}

impl Command {
    fn split(self) -> (Kind, Common) {
        match self {
            Command::Sample(c) => (Kind::Sample, c),
            Command::Exit(c) => (Kind::Exit, c),
            Command::LowerTail(c) => (Kind::LowerTail, c),
            Command::Molchan(c) => (Kind::Molchan, c),
            Command::Laplace(c) => (Kind::Laplace, c),
            Command::Chain(c) => (Kind::Chain, c),
            Command::DriftBound(c) => (Kind::DriftBound, c),
            Command::Slepian(c) => (Kind::Slepian, c),
            Command::VerifyAppendix(c) => (Kind::VerifyAppendix, c),
            Command::Fit(c) => (Kind::Fit, c),
        }
    }
}

fn main() -> ExitCode {
    let (kind, common) = Cli::parse().command.split();
    match execute(kind, common) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("fbm-exit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(kind: Kind, common: Common) -> Result<u8, CliError> {
    let file = match &common.config {
        Some(p) => SpecOverrides::from_file(p)?,
        None => SpecOverrides::default(),
    };
    if let Some(k) = file.kind.filter(|&k| k != kind) {
        return Err(CliError::Validation(format!(
            "config declares kind {k} but the command is {kind}"
        )));
    }
    let cli = SpecOverrides {
        kind: Some(kind),
        ..common.spec
    };
    let spec = cli.over(file).resolve()?;
    let manifest = run_with_threads(&spec, threads_from_env()?)?;

    println!("{}", spec.out.display());
    println!("{}", manifest_path(&spec.out).display());
    if let RunStatus::Violation { cell, witness } = &manifest.status {
        eprintln!("fbm-exit: violation in {cell}");
        eprintln!("{}", serde_json::to_string_pretty(witness).unwrap_or_default());
    }
    Ok(manifest.exit_code() as u8)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polarity_cli::{execute, parse_config, CliError, Command};

#[derive(Parser)]
#[command(name = "polarity", version, about = "Exact simulation and verification of a stochastic cell-polarity model")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Run configuration (`key = value` per line).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `replicas` from the config.
    #[arg(long, global = true)]
    replicas: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Print the closed-form predictions as JSON.
    Predict,
    /// Write trajectory and snapshot CSVs for every replica.
    Simulate,
    /// Stationary spread estimate against the closed form and the lookdown oracle.
    VerifySpread,
    /// Largest-clan law against Poisson-Dirichlet, and the distinct-clan slope.
    VerifyClans,
    /// Hitting-time probabilities over N, 10N, 100N.
    HittingScan,
    /// Polarity and single-clan occupancy fractions.
    PolarityScan,
    /// Spread estimate from the lookdown oracle alone.
    Lookdown,
    /// GEM stick-breaking samples as CSV.
    GemSample,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Predict => Command::Predict,
            Sub::Simulate => Command::Simulate,
            Sub::VerifySpread => Command::VerifySpread,
            Sub::VerifyClans => Command::VerifyClans,
            Sub::HittingScan => Command::HittingScan,
            Sub::PolarityScan => Command::PolarityScan,
            Sub::Lookdown => Command::Lookdown,
            Sub::GemSample => Command::GemSample,
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let path = cli.config.ok_or_else(|| CliError::Usage("--config <path> is required".into()))?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(r) = cli.replicas {
        if r == 0 {
            return Err(CliError::Usage("--replicas must be at least 1".into()));
        }
        config.replicas = r;
    }
    let cmd = Command::from(cli.command);
    let outcome = execute(cmd, &config, cli.out.as_deref())?;
    if cmd == Command::Predict {
        println!("{}", serde_json::to_string_pretty(&outcome.summary).expect("JSON"));
    } else {
        for line in &outcome.report {
            println!("{line}");
        }
        if let Some(p) = outcome.pass {
            println!("{}: {}", cmd.name(), if p { "PASS" } else { "FAIL" });
        }
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

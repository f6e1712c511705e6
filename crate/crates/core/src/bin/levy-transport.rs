//! Command-line runner: one subcommand per suite.
//!
//! Exit status is 0 when every check passes, 1 when a check fails and 2 on
//! usage, config or I/O errors.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levy_transport::experiment::{parse_entries, run_suite, ExperimentConfig, Suite};
use levy_transport::Error;

#[derive(Parser)]
#[command(name = "levy-transport", version, about = "Non-local drift-diffusion simulator and verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for ensemble members.
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Lp maximum principle on forward runs.
    Maxprinciple(RunArgs),
    /// Bounds 0 <= theta <= M on forward runs.
    Positivity(RunArgs),
    /// Symbol tables and bound margins.
    Symbol(RunArgs),
    /// Besov regularity chain on random ensembles.
    Besov(RunArgs),
    /// Stroock-Varopoulos ratios on random fields.
    Svineq(RunArgs),
    /// Cutoff commutator radius sweep.
    Commutator(RunArgs),
    /// Molecule envelopes and iterated L1 cap.
    Molecule(RunArgs),
    /// Duality defect under dt refinement.
    Transfer(RunArgs),
    /// Heat-kernel operator norm slope.
    Heatlevy(RunArgs),
    /// Picard contraction for the viscous problem.
    Picard(RunArgs),
    /// Holder seminorm under grid refinement.
    Holder(RunArgs),
    /// Print a suite's default config.
    Defaults {
        /// Suite name.
        suite: String,
    },
}

fn load(suite: Suite, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut map: BTreeMap<String, String> = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            parse_entries(&text)?
        }
        None => BTreeMap::new(),
    };
    if let Some(s) = args.seed {
        map.insert("seed".into(), s.to_string());
    }
    if let Some(k) = args.parallel {
        map.insert("parallel".into(), k.to_string());
    }
    ExperimentConfig::from_entries(&map, Some(suite))
}

fn run(cmd: Command) -> Result<bool, Error> {
    let (suite, args) = match cmd {
        Command::Maxprinciple(a) => (Suite::MaxPrinciple, a),
        Command::Positivity(a) => (Suite::Positivity, a),
        Command::Symbol(a) => (Suite::Symbol, a),
        Command::Besov(a) => (Suite::Besov, a),
        Command::Svineq(a) => (Suite::SvIneq, a),
        Command::Commutator(a) => (Suite::Commutator, a),
        Command::Molecule(a) => (Suite::Molecule, a),
        Command::Transfer(a) => (Suite::Transfer, a),
        Command::Heatlevy(a) => (Suite::HeatLevy, a),
        Command::Picard(a) => (Suite::Picard, a),
        Command::Holder(a) => (Suite::Holder, a),
        Command::Defaults { suite } => {
            let cfg = ExperimentConfig::defaults(Suite::parse(&suite)?);
            for (k, v) in cfg.to_entries() {
                println!("{k} = {v}");
            }
            return Ok(true);
        }
    };
    let cfg = load(suite, &args)?;
    let out = args
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from(format!("out/{}", suite.name())));
    let report = run_suite(&cfg, &out)?;
    for c in &report.checks {
        println!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
    }
    println!("{}: {} ({})", suite.name(), if report.pass { "pass" } else { "fail" }, out.display());
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

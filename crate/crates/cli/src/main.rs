use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twistorlab_cli::config::{ExperimentConfig, Step};
use twistorlab_cli::pipeline::{build_and_write, run, write_outputs};
use twistorlab_cli::report::Report;
use twistorlab_cli::verify::{self, Level, Mutation};
use twistorlab_cli::{CliError, EXIT_ERROR, EXIT_FAIL, EXIT_PASS};

#[derive(Parser)]
#[command(
    name = "twistorlab",
    version,
    about = "Energy, twisting and lightcone experiments on flat λ-families"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Config file, or the name of a bundled config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to the config's `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the solution and family and write them as JSON.
    Build(RunArgs),
    /// Run the config's full pipeline.
    Run(RunArgs),
    /// Run only the energy step.
    Energy(RunArgs),
    /// Run only the twist step.
    Twist(RunArgs),
    /// Run only the dual-surface step.
    Dual(RunArgs),
    /// Run only the residue step.
    Residue(RunArgs),
    /// Run only the lightcone step.
    Lightcone(RunArgs),
    /// Run the acceptance suite.
    Verify {
        #[arg(long, value_enum, default_value = "fast")]
        level: Level,
        /// Write `verify.json` into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Inject a deliberate error that must fail one criterion.
        #[arg(long, value_enum)]
        mutate: Option<Mutation>,
    },
}

fn load(args: &RunArgs) -> Result<(ExperimentConfig, u64, PathBuf), CliError> {
    let config = ExperimentConfig::load(&args.config)?;
    let seed = args.seed.unwrap_or(config.seed);
    let dir = args.out.clone().unwrap_or_else(|| config.output.dir.clone());
    Ok((config, seed, dir))
}

fn pipeline(args: &RunArgs, only: Option<Step>) -> Result<Report, CliError> {
    let (mut config, seed, dir) = load(args)?;
    if let Some(step) = only {
        config.pipeline = vec![step];
        config.validate()?;
    }
    let out = run(&config, seed)?;
    write_outputs(&config, &out, &dir)?;
    Ok(out.report)
}

fn summarize(report: &Report) -> i32 {
    for c in &report.checks {
        println!("{}", c.describe());
    }
    if report.passed {
        println!("{}: all {} checks passed", report.name, report.checks.len());
        EXIT_PASS
    } else {
        let failed: Vec<&str> = report.failed().map(|c| c.name.as_str()).collect();
        eprintln!("{}: failed checks: {}", report.name, failed.join(", "));
        EXIT_FAIL
    }
}

fn verify_cmd(level: Level, out: Option<&Path>, mutate: Option<Mutation>) -> Result<i32, CliError> {
    let summary = verify::run(level, mutate)?;
    print!("{}", summary.table());
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("verify.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    Ok(if summary.passed { EXIT_PASS } else { EXIT_FAIL })
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    let report = match &cli.command {
        Command::Build(a) => {
            let (config, seed, dir) = load(a)?;
            build_and_write(&config, seed, &dir)?
        }
        Command::Run(a) => pipeline(a, None)?,
        Command::Energy(a) => pipeline(a, Some(Step::Energy))?,
        Command::Twist(a) => pipeline(a, Some(Step::Twist))?,
        Command::Dual(a) => pipeline(a, Some(Step::Dual))?,
        Command::Residue(a) => pipeline(a, Some(Step::Residue))?,
        Command::Lightcone(a) => pipeline(a, Some(Step::Lightcone))?,
        Command::Verify { level, out, mutate } => return verify_cmd(*level, out.as_deref(), *mutate),
    };
    Ok(summarize(&report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    };
    ExitCode::from(code as u8)
}

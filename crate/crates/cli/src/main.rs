use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};
use zlsfem::harness::selfcheck::{run_selfcheck, Fault};
use zlsfem::harness::{run_benchmark, run_sweep, sweep_configs, BenchmarkConfig, HarnessError, SweepParam};
use zlsfem::linear_solver::set_thread_count;

const EXIT_CONFIG: u8 = 1;
const EXIT_INVARIANT: u8 = 2;

#[derive(Parser)]
#[command(name = "zlsfem", version, about = "Adaptive least-squares FEM for quasi-linear elliptic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one benchmark and write its convergence history as CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; defaults to the config's `output`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record wall-clock times (breaks byte-identical reruns).
        #[arg(long)]
        timings: bool,
        /// Also write the final discrete solution to this file.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Run a benchmark once per value of one parameter.
    Sweep {
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        timings: bool,
        /// Execute the runs concurrently; output order is unchanged.
        #[arg(long)]
        parallel: bool,
    },
    /// Run the fast invariant suite.
    Selfcheck {
        /// Deliberately break one component to confirm the suite notices.
        #[arg(long, value_enum)]
        inject: Option<Injection>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Injection {
    HalveOmega1,
    ReverseTieBreak,
}

enum Failure {
    Config(anyhow::Error),
    Invariant(anyhow::Error),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) => Failure::Config(e.into()),
            other => Failure::Invariant(other.into()),
        }
    }
}

fn load_config(path: &Path) -> Result<BenchmarkConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .map_err(Failure::Config)?;
    BenchmarkConfig::from_json(&text)
        .with_context(|| format!("invalid config {}", path.display()))
        .map_err(Failure::Config)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text)
            .with_context(|| format!("cannot write {}", p.display()))
            .map_err(Failure::Config),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, out, timings, snapshot } => {
            let cfg = load_config(&config)?;
            let run = run_benchmark(&cfg, &mut ())?;
            info!("run finished after {} rows: {:?}", run.record.rows.len(), run.record.termination);
            write_output(out.as_deref().or(cfg.output.as_deref()), &run.csv(timings))?;
            if let Some(p) = snapshot {
                write_output(Some(&p), &run.snapshot())?;
            }
        }
        Command::Sweep { param, values, config, out, timings, parallel } => {
            let base = load_config(&config)?;
            let param: SweepParam = param.parse()?;
            let configs = sweep_configs(&base, param, &values)?;
            let (csv, _) = run_sweep(&configs, timings, parallel)?;
            write_output(out.as_deref().or(base.output.as_deref()), &csv)?;
        }
        Command::Selfcheck { inject } => {
            let fault = match inject {
                None => Fault::None,
                Some(Injection::HalveOmega1) => Fault::HalveOmega1,
                Some(Injection::ReverseTieBreak) => Fault::ReverseTieBreak,
            };
            let outcomes = run_selfcheck(fault);
            let mut failed = Vec::new();
            for c in &outcomes {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                if !c.passed {
                    failed.push(c.name);
                }
            }
            if !failed.is_empty() {
                return Err(Failure::Invariant(anyhow::anyhow!("failed checks: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    if let Ok(v) = std::env::var("ZLSFEM_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => set_thread_count(n),
            _ => {
                error!("ZLSFEM_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Invariant(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVARIANT)
        }
    }
}

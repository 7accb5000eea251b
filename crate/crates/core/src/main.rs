use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use afsgm::harness::{
    probe_report_text, summary_table, write_compare, write_probe, write_run, HarnessError, ProbeRunConfig,
    RunConfig,
};

#[derive(Parser)]
#[command(name = "afsgm", version, about = "Run, compare and probe adaptive stochastic gradient methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write metrics_<name>.csv.
    Run(Common),
    /// Run several configurations and write per-run metrics, combined.csv and summary.csv.
    Compare(Common),
    /// Estimate the line-search selection bias and write probe_report.txt.
    Probe(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines). Repeat for `compare`.
    #[arg(long = "config", value_name = "PATH")]
    config: Vec<PathBuf>,
    /// Override the sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Evaluate test accuracy every n iterations.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    stride: Option<u64>,
}

fn read_config(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn load_run(path: Option<&PathBuf>, c: &Common) -> Result<RunConfig, HarnessError> {
    let mut cfg = match path {
        Some(p) => RunConfig::parse(&read_config(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if c.stride.is_some() {
        cfg.stride = c.stride;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(c) => {
            if c.config.len() > 1 {
                return Err(HarnessError::Usage("run takes at most one --config; use compare".into()));
            }
            let cfg = load_run(c.config.first(), &c)?;
            let out = write_run(&cfg, &c.out)?;
            if let Some(last) = out.rows.last() {
                println!(
                    "{}: {} iterations, {} samples, train_loss {:e}",
                    out.name, last.k, last.cum_samples, last.train_loss
                );
            }
        }
        Command::Compare(c) => {
            if c.config.is_empty() {
                return Err(HarnessError::Usage("compare needs at least one --config".into()));
            }
            let cfgs = c.config.iter().map(|p| load_run(Some(p), &c)).collect::<Result<Vec<_>, _>>()?;
            let out = write_compare(&cfgs, &c.out)?;
            print!("{}", summary_table(&out.summary));
        }
        Command::Probe(c) => {
            if c.config.len() > 1 {
                return Err(HarnessError::Usage("probe takes at most one --config".into()));
            }
            if c.stride.is_some() {
                warn!("--stride has no effect on probe");
            }
            let mut cfg = match c.config.first() {
                Some(p) => ProbeRunConfig::parse(&read_config(p)?)?,
                None => ProbeRunConfig::default(),
            };
            if let Some(seed) = c.seed {
                cfg.seed = seed;
            }
            let report = write_probe(&cfg, &c.out)?;
            print!("{}", probe_report_text(&cfg, &report));
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
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

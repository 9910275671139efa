//! `cusplab run <config.json>`: batch experiments with JSON reports and CSV series.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod model;
mod output;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use commands::{run_command, RunContext};
use cusplab::report::{ExperimentConfig, ScanReport};
use cusplab::spectral::DEFAULT_DENSE_CAP;
use std::path::PathBuf;
use std::process::ExitCode;

const THREADS_VAR: &str = "CUSPLAB_THREADS";

#[derive(Parser)]
#[command(name = "cusplab", version, about = "Finite-section experiments on discrete cusps and funnels")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment config and write report.json plus CSV series.
    Run {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_dim: Option<usize>,
    },
}

fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
        return t;
    }
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn run(config: PathBuf, output: Option<PathBuf>, seed: Option<u64>, max_dim: Option<usize>) -> Result<i32> {
    let text = std::fs::read_to_string(&config).with_context(|| format!("cannot read {}", config.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = max_dim {
        cfg.max_dim = Some(m);
    }
    let max_dim = *cfg.max_dim.get_or_insert(DEFAULT_DENSE_CAP);
    if max_dim == 0 {
        anyhow::bail!("max_dim: must be positive");
    }
    let dir = output.or_else(|| cfg.output.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("cusplab-out"));
    cfg.output = Some(dir.display().to_string());

    let outcome = run_command(&RunContext { cfg: &cfg, seed: cfg.seed, max_dim })?;
    let mut echo = cfg.clone();
    echo.command_params = outcome.params;
    let report = ScanReport::new(cfg.command, serde_json::to_value(&echo)?, outcome.results, outcome.verdicts, timestamp());

    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    std::fs::write(dir.join("report.json"), json).with_context(|| format!("cannot write {}", dir.display()))?;
    for s in &outcome.series {
        s.write(&dir)?;
    }
    for v in &report.verdicts {
        eprintln!("{} {} = {:e} (tolerance {:e})", if v.pass { "PASS" } else { "FAIL" }, v.name, v.value, v.tolerance);
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var(THREADS_VAR).ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let Cmd::Run { config, output, seed, max_dim } = cli.cmd;
    match run(config, output, seed, max_dim) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

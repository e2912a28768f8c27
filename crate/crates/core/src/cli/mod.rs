//! Command-line front end: `run`, `reproduce-fig1` and `check`.

pub mod check;
pub mod config;
pub mod fig1;
pub mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, FullReport};
use crate::error::{Error, Result};
use check::{run_checks, Verdict};
use config::RunConfig;

/// Overrides the output directory of every command.
pub const OUT_DIR_ENV: &str = "INERTIAL_DERIV_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "inertial-deriv",
    version,
    about = "Inertial methods with derivative propagation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one configured experiment and write trace.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// Run both parameter cases of the least-squares experiment.
    ReproduceFig1 {
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite for a configuration.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Labels choices that are not dictated by the method itself.
pub const DEFAULTS_NOTE: &str =
    "instance size (n, m_rows), theta and seed are artifact defaults unless set in the config";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub note: String,
    pub report: FullReport,
}

pub fn main_with(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, out.as_deref()),
        Command::ReproduceFig1 { out } => {
            let dir = out.unwrap_or_else(|| PathBuf::from("out/fig1"));
            fig1::cmd_reproduce_fig1(&dir).map(|outcome| {
                for line in outcome.lines() {
                    println!("{line}");
                }
                println!("wrote {}", dir.display());
            })
        }
        Command::Check { config } => return cmd_check(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Dimension(_) | Error::Parameter(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

/// `run`: the output directory is `out`, else the config's `out_dir`.
pub fn cmd_run(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(dir) = out {
        cfg.out_dir = dir.to_path_buf();
    }
    run_config(&cfg).map(|summary| {
        let r = &summary.report;
        println!(
            "{} / {}: ρ(M) = {:.6}, iter_err = {}, deriv_err = {}",
            r.problem,
            r.schedule,
            r.limit.rho,
            fmt_opt(r.final_iter_err),
            fmt_opt(r.final_deriv_err)
        );
        println!("wrote {}", cfg.out_dir.display());
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.3e}"))
}

/// Runs a parsed config and writes its files. On divergence the partial
/// trace is still written before the error is returned.
pub fn run_config(cfg: &RunConfig) -> Result<RunSummary> {
    let e = cfg.build()?;
    let dir = &cfg.out_dir;
    let result = analysis::full_report(
        e.problem.as_ref(),
        &e.schedule,
        &e.theta,
        &e.init,
        &e.run,
        &e.analysis,
    );
    let a = match result {
        Ok(a) => a,
        Err(Error::Diverged { k, partial }) => {
            if cfg.csv {
                output::write_atomic(&dir.join("trace.csv"), &output::trace_csv(&partial, None)?)?;
            }
            return Err(Error::Diverged { k, partial });
        }
        Err(e) => return Err(e),
    };
    for w in &a.report.warnings {
        log::warn!("{w}");
    }
    if cfg.csv {
        let csv = output::trace_csv(&a.trace.run, Some(&a.series))?;
        output::write_atomic(&dir.join("trace.csv"), &csv)?;
    }
    let summary = RunSummary {
        config: cfg.clone(),
        note: DEFAULTS_NOTE.into(),
        report: a.report,
    };
    output::write_atomic(&dir.join("summary.json"), &output::json_bytes(&summary)?)?;
    Ok(summary)
}

/// `check`: prints one line per property and fails on the first failing
/// one.
pub fn cmd_check(config: &Path) -> ExitCode {
    let experiment = match RunConfig::load(config).and_then(|c| c.build()) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let results = run_checks(&experiment);
    for r in &results {
        println!("{r}");
    }
    match results.iter().find(|r| r.verdict == Verdict::Fail) {
        Some(first) => {
            eprintln!("first failing property: {}", first.name);
            ExitCode::FAILURE
        }
        None => ExitCode::SUCCESS,
    }
}

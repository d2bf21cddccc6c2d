//! `coordgen`: pmf inspection, soft-covering sweeps, protocol simulation and
//! rate-region jobs.
//!
//! Exit codes: 0 ok, 1 usage, 2 data error, 3 resource cap, 4 model error.

mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{load, Common, ConfigFile, InfoConfig};
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "coordgen", version, about = "Two-node generation of dependent random variables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
struct RunArgs {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Record wall-clock times (makes output nondeterministic).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Entropies, mutual informations and Markov residuals of a pmf file.
    Info {
        /// Pmf file (instead of a config).
        #[arg(long)]
        pmf: Option<PathBuf>,
        /// `X1,X2,Y1,Y2`; defaults to the variables of a four-variable pmf.
        #[arg(long, value_delimiter = ',')]
        demand: Option<Vec<String>>,
        /// Chain `A,B|C|D`; repeatable.
        #[arg(long)]
        markov: Vec<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Exact soft-covering TV over a rate and block-length grid.
    Softcover {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Simulate a protocol scheme.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Region bounds and membership checks.
    Region {
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Flag values win over config values.
fn merge(run: &RunArgs, cfg: Common) -> Common {
    Common {
        seed: run.seed.or(cfg.seed),
        workers: run.workers.or(cfg.workers),
        out: run.out.clone().or(cfg.out),
        timing: run.timing || cfg.timing,
    }
}

fn config_path(run: &RunArgs, command: &str) -> CliResult<PathBuf> {
    run.config
        .clone()
        .ok_or_else(|| CliError::Usage(format!("`{command}` needs --config PATH")))
}

fn require_seed(c: &Common) -> CliResult<u64> {
    c.seed
        .ok_or_else(|| CliError::Usage("a seed is required (--seed N or `seed` in the config)".into()))
}

fn set_workers(c: &Common) -> CliResult<()> {
    if let Some(w) = c.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
    }
    Ok(())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn loaded<T: serde::de::DeserializeOwned + ConfigFile>(run: &RunArgs, command: &str) -> CliResult<(T, Common)> {
    let cfg: T = load(&config_path(run, command)?)?;
    let common = merge(run, cfg.common());
    set_workers(&common)?;
    Ok((cfg, common))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Info { pmf, demand, markov, run } => {
            let (mut cfg, common) = match (&run.config, pmf) {
                (Some(_), None) => loaded::<InfoConfig>(&run, "info")?,
                (None, Some(p)) => {
                    let cfg = InfoConfig {
                        pmf: p,
                        demand: None,
                        markov: Vec::new(),
                        seed: None,
                        workers: None,
                        out: None,
                        timing: false,
                    };
                    let common = merge(&run, cfg.common());
                    (cfg, common)
                }
                _ => return Err(CliError::Usage("`info` needs exactly one of --pmf or --config".into())),
            };
            if demand.is_some() {
                cfg.demand = demand;
            }
            cfg.markov.extend(markov);
            emit(common.out.as_deref(), &commands::info(&cfg)?)
        }
        Command::Softcover { run } => {
            let (cfg, common) = loaded(&run, "softcover")?;
            let seed = require_seed(&common)?;
            let (bytes, failure) = commands::softcover(&cfg, seed, common.timing)?;
            emit(common.out.as_deref(), &bytes)?;
            failure.map_or(Ok(()), Err)
        }
        Command::Simulate { run } => {
            let (cfg, common) = loaded(&run, "simulate")?;
            let seed = require_seed(&common)?;
            emit(common.out.as_deref(), &commands::simulate(&cfg, seed)?)
        }
        Command::Region { run } => {
            let (cfg, common) = loaded::<config::RegionConfig>(&run, "region")?;
            let seed = require_seed(&common)?;
            let certs_path = match (&cfg.certificates, &common.out) {
                (Some(p), _) => p.clone(),
                (None, Some(out)) => out.with_extension("certificates.json"),
                (None, None) => {
                    return Err(CliError::Usage("`region` needs --out or `certificates` for the certificate file".into()))
                }
            };
            let (csv, certs) = commands::region(&cfg, seed)?;
            emit(common.out.as_deref(), &csv)?;
            emit(Some(&certs_path), &certs)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

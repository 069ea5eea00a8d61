//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::experiments::{run_experiment, ExperimentId, RunContext};

pub const SEED_ENV: &str = "BRG_SEED";

#[derive(Debug, Parser)]
#[command(name = "brg", version, about = "Run body-reservoir governance experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment (E1..E10) or `all`.
    Run(RunArgs),
    /// Parse and validate a config file without running anything.
    ValidateConfig {
        file: PathBuf,
    },
    /// Print the experiment catalog.
    List,
    /// Print the full default config as TOML.
    DefaultConfig,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Experiment id such as E2, or `all`.
    pub experiment: String,
    /// TOML file merged over the built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seeds per grid cell; overrides the config.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Worker threads. Defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Single worker, and ignore the BRG_SEED environment variable.
    #[arg(long)]
    pub deterministic: bool,
    /// Master seed; wins over BRG_SEED and the config.
    #[arg(long)]
    pub master_seed: Option<u64>,
}

fn parse_ids(arg: &str) -> Result<Vec<ExperimentId>> {
    if arg.eq_ignore_ascii_case("all") {
        Ok(ExperimentId::ALL.to_vec())
    } else {
        Ok(vec![arg.parse()?])
    }
}

/// Resolves the config a `run` invocation will use. `env_seed` is the value
/// of `BRG_SEED`, if set.
pub fn resolve_config(args: &RunArgs, env_seed: Option<&str>) -> Result<Config> {
    let mut cfg = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(n) = args.seeds {
        cfg.seeds = n;
    }
    if let Some(s) = args.master_seed {
        cfg.master_seed = s;
    } else if let (Some(s), false) = (env_seed, args.deterministic) {
        cfg.master_seed = s
            .trim()
            .parse()
            .map_err(|_| HarnessError::Invalid(format!("{SEED_ENV} must be an unsigned integer, got `{s}`")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let ids = parse_ids(&args.experiment)?;
    let env_seed = std::env::var(SEED_ENV).ok();
    let config = resolve_config(args, env_seed.as_deref())?;
    let jobs = if args.deterministic {
        1
    } else {
        args.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    };
    let ctx = RunContext { config, jobs };
    crate::output::prepare_out_dir(&args.out)?;
    for id in ids {
        let _ = writeln!(err, "running {id} ({}) with {} seeds", id.title(), ctx.config.seeds);
        let result = run_experiment(id, &ctx)?;
        for f in &result.failures {
            let _ = writeln!(err, "warning: {id} cell {} seed {} failed: {}", f.cell, f.seed, f.error);
        }
        for path in result.write(&ctx, &args.out)? {
            let _ = writeln!(out, "{}", path.display());
        }
    }
    Ok(())
}

fn list(out: &mut dyn Write) {
    for id in ExperimentId::ALL {
        let _ = writeln!(out, "{:<4} {:<55} {id}_grid.csv, {id}_summary.json", id.to_string(), id.title());
    }
}

/// Runs the CLI on `args` and returns the process exit status.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                let _ = write!(out, "{}", e.render());
            } else {
                let _ = write!(err, "{}", e.render());
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run(a, out, err),
        Command::ValidateConfig { file } => Config::load(file).map(|cfg| {
            let _ = writeln!(out, "{}: ok (config hash {})", file.display(), cfg.hash());
        }),
        Command::List => {
            list(out);
            Ok(())
        }
        Command::DefaultConfig => {
            let _ = write!(out, "{}", Config::default().to_toml_string());
            Ok(())
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

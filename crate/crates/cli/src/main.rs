//! `onebit`: reproduce tables, sweep thresholds, and run the cluster models.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, FileConfig};
use commands::{Failure, DEFAULT_SEED};

fn load_config(cli: &Cli) -> Result<FileConfig, Failure> {
    let Some(path) = &cli.config else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
}

/// Flag, then ONEBIT_SEED, then the config file, then the default.
fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(v) = std::env::var("ONEBIT_SEED") {
        return v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("ONEBIT_SEED='{v}' is not an unsigned integer")));
    }
    Ok(file.unwrap_or(DEFAULT_SEED))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = load_config(&cli)?;
    let seed = resolve_seed(cli.seed, file.seed)?;
    let output = cli.output.clone().or(file.output.clone());
    let format = cli
        .format
        .or(file.format)
        .unwrap_or_else(|| output::infer_format(output.as_deref()));
    log::info!("seed {seed}");
    let rows = match cli.command {
        Command::Sweep(a) => commands::run_sweep(a.merge(file.sweep), seed)?,
        Command::Table1(a) => commands::table(false, a.merge(file.table), seed)?,
        Command::Table2(a) => commands::table(true, a.merge(file.table), seed)?,
        Command::Table3(a) => commands::cluster(a.merge(file.table), seed)?,
        Command::OptThreshold(a) => commands::opt_threshold(a.merge(file.opt_threshold))?,
        Command::Meanfield(a) => commands::meanfield(a.merge(file.meanfield))?,
        Command::SimCluster(a) => commands::sim_cluster(a.merge(file.sim_cluster), seed)?,
    };
    let bytes = output::render(&rows, format)?;
    output::emit(&bytes, output.as_deref())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! Thin command-line dispatcher over the library's `cli` module.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mlmule::cli;

#[derive(Parser)]
#[command(
    name = "mule-sim",
    about = "Deterministic simulator for mobility-driven collaborative learning",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file (sectioned key=value text)
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. --set p_cross=0.5 (repeatable)
    #[arg(long = "set", value_parser = parse_set, action = clap::ArgAction::Append)]
    sets: Vec<(String, String)>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation for one or more seeds and write metrics CSVs
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Seeds to run: `7`, `0,1,2`, or `0..9` (inclusive); defaults
        /// to the config's seed
        #[arg(long)]
        seeds: Option<String>,
        /// Output directory for CSVs, manifest, and canonical config
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Print the per-owner class-count table for the configured partition
    PartitionStats {
        #[command(flatten)]
        config: ConfigArgs,
        /// Write the table here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a check-in table (user,place,timestamp,dwell) to the trace format
    TraceConvert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Divide timestamps and dwells by this factor
        #[arg(long, default_value_t = 1)]
        time_div: u64,
        /// Floor for converted dwell lengths
        #[arg(long, default_value_t = 1)]
        min_dwell: u64,
    },
    /// Join run directories into one smoothed, plot-ready CSV
    Compare {
        /// Run directories produced by `simulate`
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Trailing moving-average window (time points)
        #[arg(long, default_value_t = 100)]
        window: usize,
        /// Write the joined CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_set(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got `{s}`"))
}

fn run() -> mlmule::Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, seeds, out } => {
            let seed_list = seeds.as_deref().map(cli::parse_seed_spec).transpose()?;
            let manifest = cli::cmd_simulate(&config.config, &config.sets, seed_list, &out)?;
            eprintln!(
                "wrote {} run(s) to {} (config {})",
                manifest.files.len(),
                manifest.out_dir.display(),
                &manifest.config_hash[..12.min(manifest.config_hash.len())]
            );
            Ok(())
        }
        Command::PartitionStats { config, out } => {
            cli::cmd_partition_stats(&config.config, &config.sets, out.as_deref())
        }
        Command::TraceConvert {
            input,
            output,
            time_div,
            min_dwell,
        } => {
            let report = cli::cmd_trace_convert(&input, &output, time_div, min_dwell)?;
            eprintln!(
                "converted {} records ({} users, {} places), {} malformed rows skipped",
                report.records, report.users, report.places, report.malformed
            );
            Ok(())
        }
        Command::Compare { dirs, window, out } => cli::cmd_compare(&dirs, window, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(cli::exit_code(&err) as u8)
        }
    }
}

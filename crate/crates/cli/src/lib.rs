//! Batch experiment driver: reads a TOML experiment description, solves the
//! obstacle problem, runs the requested checks and analytics, and writes
//! JSON/CSV artifacts (and optional PNG plots) into one output directory.

pub mod config;
pub mod expr;
pub mod output;
pub mod plot;
pub mod run;
pub mod sweep;

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

use config::ConfigError;
use output::OutputDir;
use run::{check_lines, run_experiment, RunOptions, EXIT_CHECK_FAILED, EXIT_CONFIG};

#[derive(Debug, Parser)]
#[command(
    name = "aobstacle",
    version,
    about = "Obstacle problems for the A-Laplacian: solve, verify, sweep"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML).
    pub config: PathBuf,
    /// Output directory [default: $AOBSTACLE_OUT/<name>, or runs/<name>].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write PNG plots of growth fits and box counts.
    #[arg(long)]
    pub plots: bool,
    /// Worker threads for sweeps.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve and run every configured check and analytic.
    Solve(Common),
    /// Solve and run the checks only; prints one line per check.
    Verify(Common),
    /// Run one experiment per value of a scalar config parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted config path, e.g. grid.nx or analytics.penalty_gap.eps.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
    },
}

fn report_config(path: &Path, e: &ConfigError) -> i32 {
    eprintln!("error: {}: {e}", path.display());
    EXIT_CONFIG
}

fn output_dir(common: &Common, name: &str, configured: Option<&str>) -> std::io::Result<OutputDir> {
    let env = std::env::var_os(output::OUTPUT_ENV).map(PathBuf::from);
    OutputDir::create(output::resolve(
        common.out.as_deref(),
        env.as_deref(),
        configured.unwrap_or(name),
    ))
}

fn single(common: &Common, checks_only: bool) -> i32 {
    let exp = match config::load(&common.config, common.seed) {
        Ok(e) => e,
        Err(e) => return report_config(&common.config, &e),
    };
    let opts = RunOptions {
        checks_only,
        plots: common.plots,
    };
    let result = output_dir(common, &exp.name, exp.output.as_deref())
        .and_then(|out| run_experiment(&exp, &out, opts).map(|r| (out, r)));
    match result {
        Ok((out, record)) => {
            for line in check_lines(&record) {
                println!("{line}");
            }
            for e in &record.errors {
                eprintln!("error: {e}");
            }
            if !checks_only {
                for (k, v) in &record.metrics {
                    println!("{k} = {v:e}");
                }
            }
            println!(
                "{}: {:?}, wrote {}",
                record.name,
                record.status,
                out.root().join("run.json").display()
            );
            record.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CHECK_FAILED
        }
    }
}

fn sweep_cmd(common: &Common, param: &str, values: &[String]) -> i32 {
    let path = &common.config;
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("experiment");
    let (base, exps) = match sweep::prepare(&text, dir, stem, param, values, common.seed) {
        Ok(x) => x,
        Err(e) => return report_config(path, &e),
    };
    let opts = sweep::SweepOptions {
        jobs: common.jobs,
        run: RunOptions {
            checks_only: false,
            plots: common.plots,
        },
    };
    let result = output_dir(common, &base.name, base.output.as_deref()).and_then(|out| {
        sweep::run_sweep(&base.name, param, values, &exps, &out, opts).map(|r| (out, r))
    });
    match result {
        Ok((out, rec)) => {
            for row in &rec.rows {
                println!(
                    "{} = {}: {:?} (exit {})",
                    param, row.value, row.status, row.exit_code
                );
            }
            for (k, t) in &rec.trends {
                println!("trend {k}: {t:?}");
            }
            println!("wrote {}", out.root().join("sweep.json").display());
            rec.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CHECK_FAILED
        }
    }
}

/// Parses `args` (program name first) and runs the command; returns the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match &cli.command {
        Command::Solve(c) => single(c, false),
        Command::Verify(c) => single(c, true),
        Command::Sweep {
            common,
            param,
            values,
        } => sweep_cmd(common, param, values),
    }
}

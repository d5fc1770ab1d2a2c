mod commands;
mod error;
mod input;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BoundArgs, Kind, OracleArgs, Outcome, VisualArgs};
use error::CliError;
use input::{load_cloud, load_subspace, DatumFile, Overrides};

/// Bounds and numerical estimates for Brascamp-Lieb constants.
///
/// Reports print a human-readable table followed by `key=value` lines after
/// a `---` fence. Exit status: 0 on success, 1 on usage or parse errors, 2 when a
/// hypothesis fails or a bound is infinite. `BLB_THREADS` caps the number
/// of worker threads.
#[derive(Debug, Parser)]
#[command(name = "blb", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Prints the summary functionals of a datum and a β_min estimate.
    Analyze {
        datum: PathBuf,
        /// Seed of the subspace search behind the β_min estimate.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluates one of the upper or lower bounds.
    Bound {
        datum: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Thresholds, one per map or a single value for all maps.
        #[arg(long = "alpha", value_delimiter = ',', num_args = 1..)]
        alphas: Vec<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Subspace file ("d k" header, then k spanning vectors) for lower bounds.
        #[arg(long)]
        w: Option<PathBuf>,
        /// Localization scale: `T = t I` for lower-localized, `R_j = t I` for upper-localized.
        #[arg(long)]
        t: Option<f64>,
        /// Localization `T = eps I` for upper-localized.
        #[arg(long)]
        eps: Option<f64>,
        /// Accept an inconclusive perceptivity search.
        #[arg(long)]
        force_unknown: bool,
        /// Report whose `alphas` and `beta` keys supply defaults.
        #[arg(long)]
        overrides: Option<PathBuf>,
        /// Evaluates an upper bound at each uniform threshold in the list.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        alpha_sweep: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Maximizes the Gaussian Lieb functional, along a (t, ε) schedule or on
    /// the file's own regs and loc.
    Oracle {
        datum: PathBuf,
        /// `T:E` runs t = 1 … 10^T against ε = 1 … 10^-E.
        #[arg(long, value_parser = parse_schedule)]
        schedule: Option<(u32, u32)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        restarts: usize,
        #[arg(long, default_value_t = 5000)]
        max_iter: usize,
    },
    /// Compares both sides of the visual inequality over a range of scales.
    Visual {
        datum: PathBuf,
        /// Point cloud file ("d n" header, then n points).
        cloud: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0.25,0.125,0.0625,0.03125")]
        delta_sweep: Vec<f64>,
        #[arg(long = "alpha", value_delimiter = ',', num_args = 1..)]
        alphas: Vec<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        force_unknown: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_schedule(s: &str) -> Result<(u32, u32), String> {
    let (t, e) = s.split_once(':').ok_or_else(|| format!("expected T:E, got {s:?}"))?;
    let parse = |x: &str| x.trim().parse::<u32>().map_err(|_| format!("invalid decade count {x:?}"));
    Ok((parse(t)?, parse(e)?))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("BLB_THREADS") else { return Ok(()) };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("BLB_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {threads} threads: {e}")))
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    configure_threads()?;
    match cli.command {
        Command::Analyze { datum, seed } => commands::analyze(&DatumFile::load(&datum)?, seed),
        Command::Bound { datum, kind, alphas, beta, w, t, eps, force_unknown, overrides, alpha_sweep, seed } => {
            let file = DatumFile::load(&datum)?;
            let args = BoundArgs {
                kind,
                alphas,
                beta,
                w: w.as_deref().map(load_subspace).transpose()?,
                t,
                eps,
                force_unknown,
                overrides: overrides.as_deref().map(Overrides::load).transpose()?.unwrap_or_default(),
                seed,
                sweep: alpha_sweep,
            };
            commands::bound(&file, &args)
        }
        Command::Oracle { datum, schedule, seed, restarts, max_iter } => {
            commands::oracle(&DatumFile::load(&datum)?, &OracleArgs { schedule, seed, restarts, max_iter })
        }
        Command::Visual { datum, cloud, delta_sweep, alphas, beta, force_unknown, seed } => {
            let file = DatumFile::load(&datum)?;
            let args = VisualArgs { cloud: load_cloud(&cloud)?, deltas: delta_sweep, alphas, beta, force_unknown, seed };
            commands::visual(&file, &args)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            match outcome.failure {
                None => ExitCode::SUCCESS,
                Some(reason) => {
                    eprintln!("blb: {reason}");
                    ExitCode::from(2)
                }
            }
        }
        Err(e) => {
            eprintln!("blb: {e}");
            e.exit_code()
        }
    }
}

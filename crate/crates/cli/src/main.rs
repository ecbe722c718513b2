use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mavg_cli::{run_experiment, CliError, ConfigSources, Experiment, Scale};

/// Prices moving-average options and runs the reference experiments.
///
/// Any other `--key=value` argument overrides a config field, addressed by
/// dotted path (`--grid.N_delta=5`, `--sweep.n=1,2,3`) or by one of the
/// aliases s0, r, sigma, T, N, N_delta, N_lag, bS, bX, min_points_per_cell.
#[derive(Debug, Parser)]
#[command(name = "mavg-pricer", version)]
struct Args {
    /// table1, approx-error, trajectory, table2, table3, delta-sweep,
    /// lag-sweep, lag-window-sweep, bermudan-convergence or price.
    experiment: String,

    /// JSON config file layered over the experiment preset.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Preset size: desk or paper.
    #[arg(long)]
    scale: Option<String>,

    /// First seed; the preset's seed count is kept.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

const KNOWN_FLAGS: [&str; 4] = ["--config", "--scale", "--seed", "--out"];

/// Separates `--key=value` overrides from the arguments clap understands.
fn split_args(args: impl Iterator<Item = String>) -> (Vec<String>, Vec<String>) {
    let mut clap_args = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        let name = arg.split('=').next().unwrap_or_default();
        if arg.starts_with("--") && arg.contains('=') && !KNOWN_FLAGS.contains(&name) {
            overrides.push(arg);
        } else {
            clap_args.push(arg);
        }
    }
    (clap_args, overrides)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MAVG_THREADS") else { return Ok(()) };
    let threads: usize =
        raw.parse().ok().filter(|&t| t > 0).ok_or_else(|| {
            CliError::config(format!("MAVG_THREADS must be a positive integer, got '{raw}'"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::config(format!("cannot size the thread pool: {e}")))
}

fn main_inner(args: Args, overrides: Vec<String>) -> Result<(), CliError> {
    configure_threads()?;
    let experiment: Experiment = args.experiment.parse()?;
    let sources = ConfigSources {
        file: args.config,
        overrides,
        scale: args.scale.as_deref().map(str::parse::<Scale>).transpose()?,
        seed: args.seed,
        out: args.out,
    };
    for path in run_experiment(experiment, &sources)? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (clap_args, overrides) = split_args(std::env::args());
    let args = match Args::try_parse_from(clap_args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match main_inner(args, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

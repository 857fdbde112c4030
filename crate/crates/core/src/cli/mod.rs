//! The `oglasso` command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 input (parse, I/O,
//! malformed data), 4 numerical failure.

mod commands;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;

pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "oglasso", version, about = "Overlapping group lasso, GSEA and pathway simulations")]
pub struct Cli {
    /// Worker threads (default: one per core). Outputs do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only report errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a group lasso path on expression data grouped by gene sets.
    Fit(FitArgs),
    /// `fit` with cross-validation (10 folds unless --cv is given).
    Cv(FitArgs),
    /// Gene set enrichment analysis with a phenotype-permutation null.
    Gsea(GseaArgs),
    /// Run replicated simulation experiments from a JSON config.
    Simulate(SimulateArgs),
    /// Merge the outputs of several simulation runs.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Samples × genes CSV with a leading sample-ID column.
    #[arg(long)]
    pub expression: PathBuf,
    /// Two-column CSV: sample ID, label (0/1).
    #[arg(long)]
    pub phenotype: PathBuf,
    /// Gene sets in GMT format.
    #[arg(long)]
    pub sets: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// linear or logistic.
    #[arg(long, default_value = "logistic")]
    pub family: String,
    /// Number of cross-validation folds used to choose λ.
    #[arg(long)]
    pub cv: Option<usize>,
    /// `min` (lowest mean CV loss) or `1se` (largest λ within one standard error of it).
    #[arg(long, default_value = "min")]
    pub cv_rule: String,
    /// Explicit λ values (comma separated, strictly decreasing).
    #[arg(long, value_delimiter = ',')]
    pub lambda: Vec<f64>,
    /// Length of the automatic λ path.
    #[arg(long, default_value_t = 100)]
    pub n_lambda: usize,
    /// Smallest λ as a fraction of λ_max (default 0.001, or 0.05 when n < L).
    #[arg(long)]
    pub lambda_min_ratio: Option<f64>,
    /// Exclude genes that belong to no set instead of penalizing them individually.
    #[arg(long)]
    pub drop_ungrouped: bool,
    /// Fit on the raw block scale instead of orthonormalizing each group.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "oglasso_out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GseaArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Weight exponent of the running sum.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub perms: u64,
    /// pearson or snr.
    #[arg(long, default_value = "pearson")]
    pub metric: String,
    /// `top:<m>` or `fdr:<q>`.
    #[arg(long, default_value = "fdr:0.25")]
    pub select: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "gsea_out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON experiment config; scalar fields may be given as arrays to run a grid.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write replication 0 of the first grid point as CSV/GMT input files.
    #[arg(long)]
    pub export_data: bool,
    #[arg(long, default_value = "sim_out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Result directories written by `simulate`.
    #[arg(required = true, num_args = 1..)]
    pub dirs: Vec<PathBuf>,
    #[arg(long, default_value = "compare_out")]
    pub out: PathBuf,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // Flags only: the environment is deliberately not consulted.
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

pub fn run(cli: Cli) -> Result<(), Error> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        pool = pool.num_threads(w as usize);
    }
    let pool = pool.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Fit(a) => commands::fit(a, "fit"),
        Command::Cv(mut a) => {
            a.cv.get_or_insert(10);
            commands::fit(a, "cv")
        }
        Command::Gsea(a) => commands::gsea(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Compare(a) => commands::compare(a),
    })
}

pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.verbose, cli.quiet);
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

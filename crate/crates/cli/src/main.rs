//! `circlelab`: drivers for counting, densities, exponential-sum scans,
//! bound tables and arc classification.

mod cache;
mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use circlelab_core::DEFAULT_BUDGET;

#[derive(Parser, Debug)]
#[command(name = "circlelab", version, about = "Circle-method computations for systems of forms of differing degrees")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// System definition (JSON).
    #[arg(long, global = true)]
    pub system: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Cap on enumerated nodes or evaluations.
    #[arg(long, global = true, default_value_t = DEFAULT_BUDGET, value_parser = clap::value_parser!(u64).range(1..))]
    pub budget: u64,
    /// Comma separated, strictly increasing.
    #[arg(long, global = true, value_delimiter = ',')]
    pub schedule: Vec<f64>,
    /// Skip reading and writing the result cache.
    #[arg(long, global = true)]
    pub no_cache: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exact box counts N(X) over the schedule.
    Count {
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
    /// Per-prime local densities, plus the singular series over the schedule.
    Density {
        #[arg(long, default_value_t = 20)]
        p_max: u64,
        #[arg(long, default_value_t = 4)]
        h_max: u32,
        /// Cutoffs for the singular integral.
        #[arg(long, value_delimiter = ',')]
        integral: Vec<f64>,
    },
    /// Predicted leading constant with its full density report.
    Predict {
        #[command(flatten)]
        density: DensityArgs,
    },
    /// Counts on the schedule compared against the predicted constant.
    VerifyAsymptotic {
        #[command(flatten)]
        density: DensityArgs,
        #[arg(long, default_value_t = 0.75)]
        band_lo: f64,
        #[arg(long, default_value_t = 1.25)]
        band_hi: f64,
    },
    /// Sampled minor-arc suprema of the pure power sum of degree j.
    WeylScan {
        #[arg(long, default_value_t = 3)]
        j: u32,
        /// Q = X^q_exponent.
        #[arg(long, default_value_t = 0.5)]
        q_exponent: f64,
        /// Farey order of the sampler; defaults to ⌈Q⌉.
        #[arg(long)]
        depth: Option<u64>,
        #[arg(long, default_value_t = 4)]
        jitter: usize,
    },
    /// Mean-value counts for the pure power of degree j with u variables a side.
    MeanvalueScan {
        #[arg(long)]
        j: u32,
        #[arg(long)]
        u: u32,
    },
    /// Closed-form variable-count thresholds over a (d, k) grid.
    BoundsTable {
        #[arg(long, value_delimiter = ',', default_values_t = vec![2u32, 3])]
        d: Vec<u32>,
        #[arg(long, default_value_t = 10)]
        k_max: u32,
        #[arg(long, default_value_t = 1)]
        rho: u32,
        #[arg(long, default_value_t = 1)]
        n: u32,
    },
    /// Classifies an arc point and reports parameter feasibility.
    ArcsClassify {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        beta: Vec<f64>,
        #[arg(long)]
        x: f64,
        #[arg(long, conflicts_with_all = ["eta", "omega"])]
        theta: Option<f64>,
        #[arg(long, conflicts_with = "omega")]
        eta: Option<f64>,
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Dimension of the singular locus; defaults to the declared value or 0.
        #[arg(long)]
        dim_v: Option<u64>,
        /// Use the n-ary instantiation with this n instead of the shifted one.
        #[arg(long)]
        nary: Option<u32>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct DensityArgs {
    #[arg(long, default_value_t = 50)]
    pub p_max: u64,
    #[arg(long, default_value_t = 20)]
    pub p0: u64,
    #[arg(long, default_value_t = 6)]
    pub h_max: u32,
    #[arg(long, default_value_t = 400_000)]
    pub chi_samples: usize,
    /// Singular-series cutoffs.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 2, 4, 8, 16])]
    pub series: Vec<u64>,
    /// Singular-integral cutoffs; empty skips the integral.
    #[arg(long, value_delimiter = ',')]
    pub integral: Vec<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum MethodArg {
    Exhaustive,
    MeetInMiddle,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            if commands::is_budget_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

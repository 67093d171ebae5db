//! `efgm`: command-line front end for the extended FGM copula toolkit.
//!
//! Exit codes: 0 success, 1 statistical rejection, 2 parameter validity
//! failure, 3 usage or I/O error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_REJECT: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_USAGE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "efgm", version, about = "Extended FGM copula: sampling, estimation, testing and model selection")]
pub struct Cli {
    /// TOML run configuration; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; without it the main table goes to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Significance level.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Worker threads (speed only, results do not change).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the sufficient validity constraint of a parameter vector.
    Check(ModelArgs),
    /// Draw a sample from the copula.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of rows.
        #[arg(short, long)]
        n: Option<usize>,
    },
    /// Moment estimates, standard errors, p-values and covariance.
    Estimate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        variance: Option<VarianceArg>,
    },
    /// Confidence intervals for every coefficient.
    Ci {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        variance: Option<VarianceArg>,
    },
    /// χ² test that all second-order coefficients vanish.
    Test {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        chi2: Option<Chi2Arg>,
        /// Exit with status 1 when the test rejects.
        #[arg(long)]
        strict: bool,
    },
    /// Rosenblatt transform plus per-coordinate KS uniformity tests.
    Gof {
        #[command(flatten)]
        data: DataArgs,
        /// Model to test; defaults to the estimate from the data.
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Classical, full and reduced fits with log-likelihood, AIC and BIC.
    Select {
        #[command(flatten)]
        data: DataArgs,
        /// Re-estimate the kept coefficients on the data after zeroing.
        #[arg(long)]
        refit: bool,
        /// Scale each fit onto the validity constraint before scoring.
        #[arg(long)]
        project: bool,
    },
    /// Monte Carlo study.
    Study {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum)]
        kind: Option<StudyArg>,
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Allow nonzero second-order coefficients in a χ² run.
        #[arg(long)]
        power: bool,
        /// Directory for resumable checkpoints.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        variance: Option<VarianceArg>,
        #[arg(long, value_enum)]
        chi2: Option<Chi2Arg>,
    },
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// Parameter CSV with header `k,mask,lambda`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Built-in parameter vector.
    #[arg(long, value_enum, conflicts_with = "params")]
    pub preset: Option<Preset>,
    /// Dimension for `--preset independence` or sparse parameter files.
    #[arg(long)]
    pub dimension: Option<usize>,
    /// Accept vectors that fail the sufficient validity constraint.
    #[arg(long)]
    pub permissive: bool,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// 1-based inclusive row range `a..b`, or `a..` for a suffix.
    #[arg(long, conflicts_with = "split")]
    pub rows: Option<String>,
    /// Bearing data subsets: rows 1-1100, 1101-2156, or all.
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    #[arg(long, value_enum)]
    pub pit: Option<PitArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Study,
    Independence,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Split {
    Data1,
    Data2,
    Data3,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PitArg {
    None,
    Gent,
    Ranks,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VarianceArg {
    Remark,
    PlugIn,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Chi2Arg {
    NullIdentity,
    PlugIn,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StudyArg {
    Consistency,
    Coverage,
    Covariance,
    Chi2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Md,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    let invalid = err.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<efgm::Error>(),
            Some(
                efgm::Error::Invalid { .. }
                    | efgm::Error::NonPositiveDensity { .. }
                    | efgm::Error::SingularPrefix { .. }
            )
        )
    });
    if invalid {
        EXIT_INVALID
    } else {
        EXIT_USAGE
    }
}

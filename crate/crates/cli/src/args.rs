use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CliError, CliResult};

/// Desk-scale bi-level and equilibrium experiments with shared quasi-Newton inverses.
#[derive(Parser, Debug)]
#[command(name = "shine", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Hyperparameter search on regularized regression; one trace per seed plus a summary.
    Bilevel(BilevelArgs),
    /// Compare the quasi-Newton inverse with a dense inverse along several directions.
    OpaQuality(OpaQualityArgs),
    /// Train a small equilibrium model and probe gradient fidelity.
    DeqToy(DeqToyArgs),
    /// Nonlinear spectral-radius estimate of an equilibrium layer around its fixed point.
    Spectral(SpectralArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProblemKind {
    /// L2-regularized logistic regression.
    Logreg,
    /// Regularized nonlinear least squares.
    Nls,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seeds: `a..b` (inclusive), a comma list, or a single integer.
    #[arg(long, default_value = "0")]
    pub seeds: String,

    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Trace format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,

    /// Run every seed this many times and report the median timing.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,

    /// Added to every seed.
    #[arg(long, env = "SHINE_SEED_OFFSET", default_value_t = 0)]
    pub seed_offset: u64,
}

#[derive(Args, Debug)]
pub struct BilevelArgs {
    /// LIBSVM file (optionally `.gz`) or `synth:<n>x<d>`.
    #[arg(long, default_value = "synth:2000x20")]
    pub data: String,

    /// hoag, hoag-limited:<k>, shine, shine-opa, shine-fallback, shine-refine:<k>,
    /// jacobian-free, jf-refine:<k> or random-search.
    #[arg(long, default_value = "shine")]
    pub method: String,

    #[arg(long, value_enum, default_value_t = ProblemKind::Logreg)]
    pub problem: ProblemKind,

    /// Outer iterations (random search: number of samples).
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,

    /// Initial log regularization strength.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta0: f64,

    /// Label noise of synthetic data.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,

    /// Strength range sampled by random search.
    #[arg(long, default_value_t = 1e-6)]
    pub strength_min: f64,

    #[arg(long, default_value_t = 1e2)]
    pub strength_max: f64,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct OpaQualityArgs {
    /// LIBSVM file or `synth:<n>x<d>`; at most 500 features.
    #[arg(long, default_value = "synth:300x30")]
    pub data: String,

    /// Regularization strength of the inner problem.
    #[arg(long, default_value_t = 1e-2)]
    pub strength: f64,

    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct DeqToyArgs {
    /// exact, shine, shine-fallback, shine-opa, shine-refine:<k>, jacobian-free or jf-refine:<k>.
    #[arg(long, default_value = "shine")]
    pub method: String,

    #[arg(long, default_value_t = 200)]
    pub steps: usize,

    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,

    /// Equilibrium state dimension.
    #[arg(long, default_value_t = 8)]
    pub dim: usize,

    #[arg(long, default_value_t = 4)]
    pub input_dim: usize,

    #[arg(long, default_value_t = 2)]
    pub output_dim: usize,

    /// Samples per batch.
    #[arg(long, default_value_t = 16)]
    pub batch: usize,

    /// Distinct batches cycled through during training.
    #[arg(long, default_value_t = 4)]
    pub batches: usize,

    /// Compare with the exact gradient every this many steps; 0 disables.
    #[arg(long, default_value_t = 10)]
    pub probe_every: usize,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct SpectralArgs {
    #[arg(long, default_value_t = 8)]
    pub dim: usize,

    #[arg(long, default_value_t = 4)]
    pub input_dim: usize,

    #[arg(long, default_value_t = 2)]
    pub output_dim: usize,

    #[arg(long, default_value_t = 100)]
    pub iters: usize,

    /// Zero the recurrent weights before probing.
    #[arg(long)]
    pub zero_w: bool,

    /// Probe the linear map `z ↦ c·z` instead of the layer.
    #[arg(long, value_name = "C", allow_hyphen_values = true)]
    pub linear_probe: Option<f64>,

    #[command(flatten)]
    pub common: Common,
}

/// Parses `a..b` (inclusive), `a,b,c` or `a`.
pub fn parse_seeds(s: &str) -> CliResult<Vec<u64>> {
    let bad = || CliError::Config(format!("bad seed list `{s}`"));
    let s = s.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?
    };
    if seeds.is_empty() {
        return Err(CliError::Config("at least one seed is required".into()));
    }
    Ok(seeds)
}

impl Common {
    /// Seeds after the offset is applied.
    pub fn resolved_seeds(&self) -> CliResult<Vec<u64>> {
        parse_seeds(&self.seeds)?
            .into_iter()
            .map(|s| {
                s.checked_add(self.seed_offset)
                    .ok_or_else(|| CliError::Config("seed offset overflows".into()))
            })
            .collect()
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.repeat == 0 {
            return Err(CliError::Config("--repeat must be at least 1".into()));
        }
        Ok(())
    }
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic { n: usize, d: usize },
    File(PathBuf),
}

impl FromStr for DataSource {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.strip_prefix("synth:") {
            Some(dims) => {
                let bad = || CliError::Config(format!("bad synthetic spec `{s}`, expected synth:<n>x<d>"));
                let (n, d) = dims.split_once('x').ok_or_else(bad)?;
                let n: usize = n.parse().map_err(|_| bad())?;
                let d: usize = d.parse().map_err(|_| bad())?;
                if n == 0 || d == 0 {
                    return Err(bad());
                }
                Ok(Self::Synthetic { n, d })
            }
            None => Ok(Self::File(PathBuf::from(s))),
        }
    }
}

//! `emac` command-line driver.
//!
//! Exit status: 0 on success, 1 on I/O failure, 2 for invalid input
//! (including malformed JSON or CSV), 3 when a numerical routine fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use emac::certificate::BatchLaw;

#[derive(Debug, Parser)]
#[command(
    name = "emac",
    version,
    about = "Spectral compressed sensing via enhanced matrix completion"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Directory that receives every output file.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Base seed; overrides the seed in a spec file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sweeps (all cores when absent).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Pencil parameters `k1,k2,..`; balanced when absent.
    #[arg(long, global = true, value_delimiter = ',')]
    pub pencil: Option<Vec<usize>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a signal's full data array, from a signal JSON or drawn at random.
    Synth(SynthArgs),
    /// Observe a signal on a uniformly random set of entries.
    Sample(SampleArgs),
    /// Complete an observation set.
    Recover(RecoverArgs),
    /// Incoherence measures of one signal, or a random batch check.
    Incoherence(IncoherenceArgs),
    /// Concentration and dual-certificate diagnostics for a sample size.
    Certify(CertifyArgs),
    /// Success-rate sweep over ranks and sample sizes.
    PhaseTransition(ExperimentArgs),
    /// Recovery from noisy samples.
    NoisyDemo(ExperimentArgs),
    /// Super-resolution of point sources from a low-frequency block.
    Superres(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Signal JSON `{"dims", "freqs", "amps"}`.
    #[arg(long, conflicts_with_all = ["dims", "rank"])]
    pub spec: Option<PathBuf>,
    /// Dimensions of a random signal, e.g. `15,15`.
    #[arg(long, value_delimiter = ',', requires = "rank")]
    pub dims: Option<Vec<usize>>,
    /// Number of spikes of a random signal.
    #[arg(long, requires = "dims")]
    pub rank: Option<usize>,
    /// Minimum wrap-around separation of random frequencies.
    #[arg(long, default_value_t = 0.0)]
    pub min_sep: f64,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Signal JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Number of observed entries.
    #[arg(long)]
    pub m: usize,
    /// Signal-to-noise amplitude ratio; noiseless when absent.
    #[arg(long)]
    pub snr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    /// Observation JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Solver configuration JSON.
    #[arg(long)]
    pub solver: Option<PathBuf>,
    /// Ground-truth array CSV, for reporting NMSE.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IncoherenceArgs {
    /// Signal JSON.
    #[arg(long, required_unless_present = "batch")]
    pub spec: Option<PathBuf>,
    /// Sample size for the sample-size conditions (all entries when absent).
    #[arg(long)]
    pub m: Option<usize>,
    /// Check `μ2, μ3 ≤ μ1² c_s² r` on this many random signals.
    #[arg(long, conflicts_with = "spec", requires = "dims")]
    pub batch: Option<usize>,
    /// Dimensions of the batch signals.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Batch ranks cycle through `1..=max_rank`.
    #[arg(long, default_value_t = 4)]
    pub max_rank: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LawArg {
    Bernoulli,
    WithReplacement,
}

impl From<LawArg> for BatchLaw {
    fn from(l: LawArg) -> Self {
        match l {
            LawArg::Bernoulli => BatchLaw::Bernoulli,
            LawArg::WithReplacement => BatchLaw::WithReplacement,
        }
    }
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// Signal JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Sample size.
    #[arg(long)]
    pub m: usize,
    /// Golfing accuracy, in (0, 1/3).
    #[arg(long, default_value_t = 0.25)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = LawArg::Bernoulli)]
    pub law: LawArg,
    /// Use power iteration with this many steps for large enhanced matrices.
    #[arg(long)]
    pub power_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment JSON; absent fields take the defaults of its kind.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the number of trials.
    #[arg(long)]
    pub trials: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("emac: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &emac::Error) -> u8 {
    match e {
        emac::Error::Validation(_) | emac::Error::Json(_) | emac::Error::Csv(_) => 2,
        emac::Error::Numerical(_) => 3,
        emac::Error::Io(_) => 1,
    }
}

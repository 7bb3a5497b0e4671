mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use railsched_core::qubo::PenaltyConfig;

/// Train rescheduling pipeline: instances, QUBO compilation, samplers, analysis.
#[derive(Debug, Parser)]
#[command(name = "railsched", version)]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "RAILSCHED_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; 1 makes every run bit-for-bit reproducible.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write an instance document (worked example or synthetic family member).
    Generate(GenerateArgs),
    /// Compile an instance into a QUBO file plus a `.catalog` sidecar.
    Qubo(QuboArgs),
    /// Solve an instance exactly and emit its solution report.
    IlpSolve(IlpSolveArgs),
    /// Sample a QUBO file with one of the backends.
    Solve(SolveArgs),
    /// Enumerate every state and summarise the feasible/infeasible spectrum.
    Spectrum(SpectrumArgs),
    /// Decode a sample file: feasibility, objectives and passing times.
    Analyze(AnalyzeArgs),
    /// Run the stochastic/deterministic hybrid loop.
    Hybrid(HybridArgs),
    /// Aggregate sample, spectrum and histogram files into one summary.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// The three-station worked example.
    #[arg(long, conflicts_with_all = ["trains", "dmax", "disturbed"])]
    pub appendix: bool,
    #[arg(long, required_unless_present = "appendix")]
    pub trains: Option<usize>,
    #[arg(long, default_value_t = 6)]
    pub dmax: i64,
    #[arg(long)]
    pub disturbed: bool,
    /// Output path; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyChoice {
    Overlapping,
    Split,
    Custom,
}

#[derive(Debug, Clone, Args)]
pub struct PenaltyArgs {
    #[arg(long, value_enum, default_value_t = PenaltyChoice::Overlapping)]
    pub penalties: PenaltyChoice,
    /// One-hot penalty for `--penalties custom`.
    #[arg(long, required_if_eq("penalties", "custom"))]
    pub p_sum: Option<f64>,
    /// Pair penalty for `--penalties custom`.
    #[arg(long, required_if_eq("penalties", "custom"))]
    pub p_pair: Option<f64>,
}

impl PenaltyArgs {
    pub fn config(&self) -> railsched_core::Result<PenaltyConfig> {
        match self.penalties {
            PenaltyChoice::Overlapping => Ok(PenaltyConfig::overlapping()),
            PenaltyChoice::Split => Ok(PenaltyConfig::split()),
            PenaltyChoice::Custom => {
                PenaltyConfig::custom(self.p_sum.unwrap_or(0.0), self.p_pair.unwrap_or(0.0))
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct QuboArgs {
    /// Instance document; stdin when omitted or `-`.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub penalties: PenaltyArgs,
    /// Output path; stdout when omitted (no catalog sidecar then).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IlpSolveArgs {
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Enumerate,
    Anneal,
    Qaoa,
}

#[derive(Debug, Clone, Args)]
pub struct SamplerArgs {
    #[arg(long, value_enum, default_value_t = Backend::Anneal)]
    pub backend: Backend,
    /// Reads to draw; 1000 for anneal and 1024 for qaoa by default.
    #[arg(long)]
    pub shots: Option<usize>,
    /// Anneal: sweeps per read.
    #[arg(long, default_value_t = 1000)]
    pub sweeps: usize,
    /// Anneal: hot end of the schedule (requires --beta-max).
    #[arg(long, requires = "beta_max")]
    pub beta_min: Option<f64>,
    /// Anneal: cold end of the schedule (requires --beta-min).
    #[arg(long, requires = "beta_min")]
    pub beta_max: Option<f64>,
    /// QAOA: number of layers.
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    /// QAOA: optimiser evaluation budget.
    #[arg(long, default_value_t = 50)]
    pub max_evals: usize,
    /// QAOA: depolarising weight in [0, 1], or `auto` to derive it from the gate count.
    #[arg(long, default_value = "0")]
    pub noise_lambda: String,
    /// Enumerate: largest variable count accepted.
    #[arg(long, default_value_t = railsched_core::samplers::DEFAULT_ENUMERATION_CAP)]
    pub cap: usize,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// QUBO file; stdin when omitted or `-`.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Instance document; stdin when omitted or `-`.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub penalties: PenaltyArgs,
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    #[arg(long, default_value_t = railsched_core::samplers::DEFAULT_ENUMERATION_CAP)]
    pub cap: usize,
    /// Summary document; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Also write every state as a sample file.
    #[arg(long)]
    pub states_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// QUBO file written by `qubo --out`; its `.catalog` sidecar is read too.
    #[arg(long)]
    pub qubo: PathBuf,
    /// Catalog file when it is not next to the QUBO.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Sample file; stdin when omitted or `-`.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Count samples that break only passing constraints.
    #[arg(long)]
    pub relaxed: bool,
    /// Edge `FROM:TO` whose passing times are histogrammed.
    #[arg(long)]
    pub edge: Option<String>,
    #[arg(long, requires = "edge")]
    pub histogram_out: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HybridArgs {
    /// Instance document; stdin when omitted or `-`.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Comma-separated stations of the stochastic zone.
    #[arg(long, value_delimiter = ',', required = true)]
    pub zone: Vec<String>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long, default_value_t = 5)]
    pub iterations: usize,
    #[arg(long, default_value_t = 3)]
    pub representatives: usize,
    #[arg(long, value_enum, default_value_t = PenaltyChoice::Split)]
    pub penalties: PenaltyChoice,
    #[arg(long, required_if_eq("penalties", "custom"))]
    pub p_sum: Option<f64>,
    #[arg(long, required_if_eq("penalties", "custom"))]
    pub p_pair: Option<f64>,
    /// Comma-separated support of a uniform extra-delay model for the zone.
    #[arg(long, value_delimiter = ',')]
    pub disturbance: Vec<i64>,
    /// Drop batches further than this (total variation) from the disturbance model.
    #[arg(long, requires = "disturbance")]
    pub tv_threshold: Option<f64>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitChoice {
    Linear,
    Exponential,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Sample files, paired in order with `--qubo` (a single QUBO serves all).
    #[arg(long)]
    pub samples: Vec<PathBuf>,
    #[arg(long)]
    pub qubo: Vec<PathBuf>,
    /// Spectrum summary documents.
    #[arg(long)]
    pub spectrum: Vec<PathBuf>,
    /// Histogram CSV files.
    #[arg(long)]
    pub histogram: Vec<PathBuf>,
    /// Model for the feasible fraction against variable count.
    #[arg(long, value_enum, default_value_t = FitChoice::Exponential)]
    pub fit: FitChoice,
    /// Human-readable summary; a `.json` sidecar is written next to it.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// Raised for flag combinations clap cannot express.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

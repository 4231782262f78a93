use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ce_survey::design::{FrameOrder, SchemeKind};
use ce_survey::el::PathChoice;
use ce_survey::model::ModelKind;
use ce_survey::population::SizeLaw;

mod commands;
mod output;
mod study;

/// Conditional empirical likelihood estimation for unequal-probability samples.
#[derive(Debug, Parser)]
#[command(name = "cesurvey", version)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Seed for every random choice; drawn from system entropy (and printed) when absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for parallel work (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output file (default: stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Column layout of a population CSV.
#[derive(Debug, Args)]
pub struct PopArgs {
    /// Population CSV with a header row.
    #[arg(long)]
    pub pop: PathBuf,

    #[arg(long, default_value = "y")]
    pub col_y: String,

    #[arg(long, default_value = "size")]
    pub col_size: String,

    /// Auxiliary column (repeatable).
    #[arg(long)]
    pub col_aux: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VisibilityChoice {
    /// `ν = π`.
    Passthrough,
    /// Least-squares smoothing of `1/π` on `--smooth-basis`.
    Smooth,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate model parameters from one sample.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study described by a TOML config.
    Simulate(SimulateArgs),
    /// Draw one sample and write it as JSON (or CSV of ids and π).
    Sample(SampleArgs),
    /// Compare empirical inclusion frequencies with the target π.
    Inclusion(InclusionArgs),
    /// Write a synthetic population CSV.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub pop: PopArgs,

    #[arg(long, default_value = "proportion")]
    pub model: ModelKind,

    /// Sample JSON as written by `sample`. Without it a fresh sample is drawn with `--scheme` and `--n`.
    #[arg(long)]
    pub scheme_file: Option<PathBuf>,

    #[arg(long, required_unless_present = "scheme_file")]
    pub scheme: Option<SchemeKind>,

    #[arg(long, required_unless_present = "scheme_file")]
    pub n: Option<usize>,

    #[arg(long, value_enum, default_value = "passthrough")]
    pub visibility: VisibilityChoice,

    /// Comma-separated basis over `size` and auxiliary columns, e.g. `1,log(size)`.
    #[arg(long, default_value = "1,size")]
    pub smooth_basis: String,

    #[arg(long, default_value = "auto")]
    pub path: PathChoice,

    /// Leave out the leading intercept column of linear and logistic models.
    #[arg(long)]
    pub no_intercept: bool,

    /// Confidence level of the reported interval.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,

    /// Write the CE weights as CSV (`id,weight`).
    #[arg(long)]
    pub dump_weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML study config.
    #[arg(long)]
    pub config: PathBuf,

    #[command(flatten)]
    pub pop: PopArgs,

    /// Histogram bin counts as CSV.
    #[arg(long)]
    pub hist_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub pop: PopArgs,

    #[arg(long)]
    pub scheme: SchemeKind,

    #[arg(long)]
    pub n: usize,

    #[arg(long, default_value = "as-given")]
    pub frame_order: FrameOrder,
}

#[derive(Debug, Args)]
pub struct InclusionArgs {
    #[command(flatten)]
    pub pop: PopArgs,

    #[arg(long)]
    pub scheme: SchemeKind,

    #[arg(long)]
    pub n: usize,

    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,

    #[arg(long, default_value = "as-given")]
    pub frame_order: FrameOrder,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4600)]
    pub units: usize,

    /// Population proportion of `y = 1`.
    #[arg(long, default_value_t = 0.3276)]
    pub prop: f64,

    /// `lognormal:MU,SIGMA` or `pareto:ALPHA,XMIN`.
    #[arg(long, default_value = "lognormal:0,1.5")]
    pub size_law: SizeLaw,

    /// Latent correlation between size and outcome.
    #[arg(long, default_value_t = -0.3, allow_hyphen_values = true)]
    pub corr: f64,

    #[arg(long, default_value = "y")]
    pub col_y: String,

    #[arg(long, default_value = "size")]
    pub col_size: String,
}

/// Solver failures exit with 3; every other error is an input problem (2).
fn exit_code(err: &anyhow::Error) -> u8 {
    let solver = err
        .chain()
        .filter_map(|e| e.downcast_ref::<ce_survey::Error>())
        .any(|e| e.is_solver_failure());
    if solver {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(t) = cli.global.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    let result = match &cli.command {
        Command::Estimate(a) => commands::estimate(&cli.global, a),
        Command::Simulate(a) => commands::simulate(&cli.global, a),
        Command::Sample(a) => commands::sample(&cli.global, a),
        Command::Inclusion(a) => commands::inclusion(&cli.global, a),
        Command::Synth(a) => commands::synth(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ncprob::experiments::DEFAULT_SEED;
use ncprob::Species;

mod commands;
mod output;

use output::Failure;

/// Operator-valued non-commutative probability over M_d(C).
#[derive(Parser, Debug)]
#[command(name = "ncprob", version, about)]
struct Cli {
    /// Seed for every randomized input; recorded in the output header.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output file; standard output if absent.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cumulants of a distribution in one species.
    Cumulants(CumulantsArgs),
    /// Convolution of two distributions.
    Convolve(ConvolveArgs),
    /// Monotone convolution power mu^{|> t} or mu^{|> eta}.
    Power(PowerArgs),
    /// Trajectory of the flow dF/dt = -Phi(F).
    Flow(FlowArgs),
    /// Triangular-array limit harness.
    Bp(BpArgs),
    /// Recover sigma[b_1 X .. X b_l] from the H-transform of sigma.
    RecoverSigma(RecoverArgs),
    /// Residual of d/dt H^{mu_t} = K^mu(H^{mu_t}).
    EvolutionCheck(EvolutionArgs),
    /// Run one acceptance item, or all of them.
    Check(CheckArgs),
}

#[derive(Args, Debug)]
pub struct Source {
    /// Moment tensor or model file.
    #[arg(long = "in")]
    pub input: PathBuf,

    /// Truncation order for model files (tensors keep their own unless lowered).
    #[arg(long)]
    pub order: Option<usize>,

    /// For (gamma, sigma) model files: the species of the law nu^{gamma,sigma} to build.
    #[arg(long)]
    pub law: Option<Species>,
}

#[derive(Args, Debug)]
pub struct CumulantsArgs {
    #[arg(long)]
    pub species: Species,
    #[command(flatten)]
    pub source: Source,
}

#[derive(Args, Debug)]
pub struct ConvolveArgs {
    #[arg(long)]
    pub species: Species,
    #[command(flatten)]
    pub source: Source,
    /// Second operand.
    #[arg(long = "with")]
    pub other: PathBuf,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("exponent").required(true).args(["t", "eta"]))]
pub struct PowerArgs {
    #[command(flatten)]
    pub source: Source,
    /// Real exponent t >= 0.
    #[arg(long)]
    pub t: Option<f64>,
    /// File with a map on vec(M_d): {"eta": [[..]]}.
    #[arg(long)]
    pub eta: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    Rk4,
    Picard,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("start").required(true).args(["b", "b_imag"]))]
pub struct FlowArgs {
    /// Model file of type "cp" holding (gamma, sigma).
    #[arg(long)]
    pub generator: PathBuf,
    /// Starting point as a matrix file (dimension level * d).
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// Start at i * lambda * 1.
    #[arg(long)]
    pub b_imag: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub level: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Rk4)]
    pub method: MethodArg,
    #[arg(long, default_value_t = ncprob::flow::DEFAULT_GRID_STEPS)]
    pub grid_steps: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RuleArg {
    BooleanSeed,
    Clt,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SigmaArg {
    Unit,
    Zero,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct BpArgs {
    /// Scalar mean of the limit (d = 1).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub gamma: f64,
    /// Scalar sigma of the limit: unit point mass at 0, or zero.
    #[arg(long, value_enum, default_value_t = SigmaArg::Unit)]
    pub sigma: SigmaArg,
    /// Model file of type "cp" giving (gamma, sigma) at any d; overrides --gamma/--sigma.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = RuleArg::BooleanSeed)]
    pub rule: RuleArg,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64")]
    pub schedule: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    #[arg(long, value_delimiter = ',', default_value = "free,boolean,monotone")]
    pub species: Vec<Species>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
}

#[derive(Args, Debug)]
pub struct RecoverArgs {
    /// Model file of type "cp"; only sigma is used.
    #[arg(long)]
    pub generator: PathBuf,
    /// File {"words": [[matrix, ..], ..]}; random words of length 1..=4 when absent.
    #[arg(long)]
    pub words: Option<PathBuf>,
    /// Radius of the ball where H_sigma is analytic; 1/||A|| when absent.
    #[arg(long)]
    pub radius: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EvolutionArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, value_delimiter = ',', default_value = "0.3,1,2")]
    pub t_grid: Vec<f64>,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("which").required(true).args(["item", "all"]))]
pub struct CheckArgs {
    #[arg(long)]
    pub item: Option<usize>,
    #[arg(long)]
    pub all: bool,
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::invalid("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::invalid(e.to_string()))?;
    }
    let ctx = output::Context::new(cli.seed, cli.out.clone());
    match &cli.command {
        Command::Cumulants(a) => commands::cumulants(&ctx, a),
        Command::Convolve(a) => commands::convolve(&ctx, a),
        Command::Power(a) => commands::power(&ctx, a),
        Command::Flow(a) => commands::flow(&ctx, a),
        Command::Bp(a) => commands::bp(&ctx, a),
        Command::RecoverSigma(a) => commands::recover_sigma(&ctx, a),
        Command::EvolutionCheck(a) => commands::evolution_check(&ctx, a),
        Command::Check(a) => commands::check(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

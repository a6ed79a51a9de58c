mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stein_diffusion::Error;

/// Ergodic diffusions with a prescribed invariant density, their Stein
/// equations, and Stein bounds for Gaussian functionals.
///
/// Every run prints its effective settings (seed included) and results in
/// INI form; that output can be passed back with --config to repeat the run.
#[derive(Parser)]
#[command(name = "stein-diffusion", version)]
struct Cli {
    /// INI file with [run], [density], [functional], [mc], [sim], [stein] and
    /// [rate] sections; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Maximum number of worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Where to write the command's table, path or report
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect a density; --out tabulates x, pdf, cdf
    Density(DensityCmd),
    /// Build and validate the diffusion coefficients; --out writes the grid
    Build(BuildCmd),
    /// Solve the Stein equation for a test function and report residual and norm constants
    Stein(SteinCmd),
    /// Stein bounds for a Gaussian functional against a target model
    Bound(BoundCmd),
    /// Simulate the diffusion and compare its occupation measure with the target
    Simulate(SimulateCmd),
    /// Run the worked identity examples; exits 1 if any check fails
    Verify(VerifyCmd),
    /// Decay of the bound for the lognormal product functional in N
    Rate(RateCmd),
}

#[derive(Args)]
pub struct DensityArgs {
    /// normal, gamma (alias chi_square), uniform, beta, lognormal, pareto or laplace
    #[arg(long)]
    pub family: Option<String>,
    /// Family parameters, comma separated (defaults per family)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub params: Option<Vec<f64>>,
    /// Tabulated density: CSV with columns x, p
    #[arg(long)]
    pub density_csv: Option<PathBuf>,
    /// Coefficient route: numeric or closed-form
    #[arg(long)]
    pub coefficients: Option<String>,
}

#[derive(Args)]
pub struct SeedArgs {
    /// Random seed; generated and reported when absent
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct McArgs {
    /// Outer Monte Carlo samples
    #[arg(long)]
    pub samples: Option<usize>,
    /// Inner samples per realization on the Monte Carlo route
    #[arg(long)]
    pub inner_samples: Option<usize>,
    /// Gauss-Legendre nodes on (0, 1)
    #[arg(long)]
    pub quad_nodes: Option<usize>,
    /// auto, closed-form or inner-mc
    #[arg(long)]
    pub route: Option<String>,
    /// Bins of the conditional projection
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Args)]
pub struct DensityCmd {
    #[command(flatten)]
    pub density: DensityArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    /// Rows of the --out table
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Args)]
pub struct BuildCmd {
    #[command(flatten)]
    pub density: DensityArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
}

#[derive(Args)]
pub struct SteinCmd {
    #[command(flatten)]
    pub density: DensityArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    /// Test function: ramp, bump or library (all 32)
    #[arg(long = "f")]
    pub f: Option<String>,
    /// Centre of the ramp or bump (default: median)
    #[arg(long, allow_negative_numbers = true)]
    pub at: Option<f64>,
}

#[derive(Args)]
pub struct FunctionalArgs {
    /// Worked example supplying functional and target
    #[arg(long)]
    pub example: Option<String>,
    /// Registered functional, e.g. exp_neg_half_sum
    #[arg(long)]
    pub functional: Option<String>,
    /// Dimension of the Gaussian vector
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Args)]
pub struct BoundCmd {
    #[command(flatten)]
    pub density: DensityArgs,
    #[command(flatten)]
    pub functional: FunctionalArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
}

#[derive(Args)]
pub struct SimulateCmd {
    #[command(flatten)]
    pub density: DensityArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    /// Time step
    #[arg(long)]
    pub dt: Option<f64>,
    /// Time horizon
    #[arg(long)]
    pub horizon: Option<f64>,
    /// euler or milstein
    #[arg(long)]
    pub scheme: Option<String>,
    /// reflect or clip
    #[arg(long)]
    pub boundary: Option<String>,
    /// Starting point (default: median)
    #[arg(long, allow_negative_numbers = true)]
    pub x0: Option<f64>,
    /// Keep every this many steps in the --out path
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Args)]
pub struct VerifyCmd {
    /// chi_square, uniform, beta, lognormal, pareto, laplace or all
    #[arg(long)]
    pub example: Option<String>,
    #[command(flatten)]
    pub mc: McArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
}

#[derive(Args)]
pub struct RateCmd {
    /// Values of N, comma separated
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[command(flatten)]
    pub mc: McArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    /// Two-column ln N, ln bound file (default: --out with extension .dat)
    #[arg(long)]
    pub loglog: Option<PathBuf>,
}

/// How a command ended when it ran to completion.
pub enum Outcome {
    Passed,
    ChecksFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(
        cli.command,
        cli.config.as_deref(),
        cli.threads,
        cli.out.as_deref(),
    ) {
        Ok(Outcome::Passed) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let usage = matches!(
                e,
                Error::Config(_) | Error::InvalidParameters { .. } | Error::UnsupportedMode(_)
            );
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

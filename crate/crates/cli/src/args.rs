use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use laplace_core::{MomentMethod, Normalization};

use crate::grid::GridSpec;

#[derive(Debug, Parser)]
#[command(name = "laplace", version, about = "Laplace approximations of posterior moments, densities and Bayes factors")]
pub struct Cli {
    /// Print reports as JSON.
    #[arg(long, global = true)]
    pub json: bool,

    /// Worker threads for Monte Carlo sampling.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=1024))]
    pub threads: u64,

    /// Seed of the Monte Carlo generator.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Posterior expectation and variance of g.
    Moments(MomentsArgs),
    /// Marginal posterior density of one parameter, as CSV.
    Marginal(MarginalArgs),
    /// Posterior density of a function g of the parameters, as CSV.
    Density(DensityArgs),
    /// Bayes factor of two models.
    BayesFactor(BayesFactorArgs),
    /// Posterior probabilities of competing models.
    ModelPosterior(ModelPosteriorArgs),
    /// Number of Gaussian mixture components by posterior probability.
    MixtureSelect(MixtureArgs),
    /// Laplace, Monte Carlo and posterior-mode estimates side by side.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Direct when g is positive at the mode, mgf otherwise.
    Auto,
    Direct,
    Mgf,
    Shift,
}

impl MethodArg {
    pub fn method(self) -> Option<MomentMethod> {
        match self {
            MethodArg::Auto => None,
            MethodArg::Direct => Some(MomentMethod::Direct),
            MethodArg::Mgf => Some(MomentMethod::Mgf),
            MethodArg::Shift => Some(MomentMethod::Shift),
        }
    }
}

fn normalization(s: &str) -> Result<Normalization, String> {
    s.parse().map_err(|e: laplace_core::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Expression in the model's parameter names.
    #[arg(long)]
    pub g: String,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    pub method: MethodArg,
    /// Constant of the shift method; defaults to 10 (1 + |g(mode)|).
    #[arg(long)]
    pub shift: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MarginalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub param: String,
    /// LO:HI:STEP; defaults to the mode plus or minus five posterior sds.
    #[arg(long)]
    pub grid: Option<GridSpec>,
    /// quadrature, laplace or unnormalized.
    #[arg(long, default_value = "quadrature", value_parser = normalization)]
    pub normalize: Normalization,
    /// Write the CSV here and the report to standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub g: String,
    #[arg(long)]
    pub grid: GridSpec,
    #[arg(long, default_value = "quadrature", value_parser = normalization)]
    pub normalize: Normalization,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BayesFactorArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Second model. May be omitted for a two-treatment file, which then
    /// compares separate rates against a common one.
    #[arg(long)]
    pub model2: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelPosteriorArgs {
    #[arg(long = "model", num_args = 1.., required = true)]
    pub models: Vec<PathBuf>,
    /// Prior model probabilities; uniform when omitted.
    #[arg(long = "prior", num_args = 1..)]
    pub priors: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct MixtureArgs {
    /// One observation per line, `#` comments.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=10))]
    pub kmax: u64,
    /// Prior over k = 1..kmax; uniform when omitted.
    #[arg(long = "prior", num_args = 1..)]
    pub priors: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub g: String,
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    pub method: MethodArg,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rate", version, about = "Relative centrality variable prioritization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate genotypes, a phenotype and the ground truth.
    Simulate(SimulateArgs),
    /// Fit the GP and rank variables by RATE.
    Rate(RateArgs),
    /// Single-SNP association scan.
    Scan(ScanArgs),
    /// Replicated RATE vs. scan power comparison.
    Power(PowerArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Standard,
    Stratified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Spectral,
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    #[value(name = "I")]
    I,
    #[value(name = "II")]
    II,
    #[value(name = "III")]
    #[allow(clippy::upper_case_acronyms)]
    III,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    /// Causal SNPs, 1-based, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub causal: Vec<usize>,
    #[arg(long)]
    pub h2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, value_enum, default_value_t = ModelArg::Standard)]
    pub model: ModelArg,
    /// Genotype PCs in the stratified model.
    #[arg(long, default_value_t = 0)]
    pub pcs: usize,
    /// Phenotypic variance fraction carried by the PCs.
    #[arg(long, default_value_t = 0.0)]
    pub pc_var: f64,
    /// The first K causal SNPs form interaction group 1, the rest group 2.
    #[arg(long)]
    pub groups: Option<usize>,
    /// Give every causal SNP this effect instead of drawing N(0, 1).
    #[arg(long)]
    pub beta_const: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Balding-Nichols structured genotypes.
    #[arg(long)]
    pub structured: bool,
    #[arg(long, default_value_t = 3)]
    pub subpops: usize,
    #[arg(long, default_value_t = 0.1)]
    pub fst: f64,
    #[arg(long, default_value_t = 0.05)]
    pub freq_lo: f64,
    #[arg(long, default_value_t = 0.5)]
    pub freq_hi: f64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct GpArgs {
    #[arg(long, value_enum, default_value_t = KernelArg::Gaussian)]
    pub kernel: KernelArg,
    /// Gaussian bandwidth; the median pairwise distance when omitted.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long, default_value_t = rate_core::kernel::DEFAULT_JITTER)]
    pub jitter: f64,
    #[arg(long, default_value_t = 10_000)]
    pub iter: usize,
    #[arg(long, default_value_t = 1_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    /// Prior degrees of freedom for the noise variance.
    #[arg(long, default_value_t = 5.0)]
    pub a: f64,
    /// Prior scale for the noise variance.
    #[arg(long, default_value_t = 0.4)]
    pub b: f64,
    #[arg(long, value_enum, default_value_t = BackendArg::Spectral)]
    pub backend: BackendArg,
    /// Relative singular-value cutoff for pseudoinverses.
    #[arg(long, default_value_t = rate_core::projection::DEFAULT_SV_TOL)]
    pub sv_tol: f64,
    /// Covariance ridge, relative to the mean marginal variance.
    #[arg(long, default_value_t = rate_core::projection::DEFAULT_RIDGE)]
    pub ridge: f64,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[arg(long)]
    pub genotypes: PathBuf,
    #[arg(long)]
    pub phenotype: PathBuf,
    #[command(flatten)]
    pub gp: GpArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Nullify the top variable up to K times.
    #[arg(long, conflicts_with = "nullify")]
    pub cascade: Option<usize>,
    #[arg(long, default_value_t = rate_core::rate::DEFAULT_STOP_DELTA)]
    pub stop_delta: f64,
    /// Nullify these variables (1-based) in order instead.
    #[arg(long, value_delimiter = ',')]
    pub nullify: Vec<usize>,
    /// Also write the retained f and tau2 draws.
    #[arg(long)]
    pub dump_draws: bool,
    /// Also write the posterior mean and marginal variance of each effect.
    #[arg(long)]
    pub dump_moments: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub genotypes: PathBuf,
    #[arg(long)]
    pub phenotype: PathBuf,
    /// Family-wise level for the Bonferroni threshold.
    #[arg(long, default_value_t = rate_core::baseline::DEFAULT_LEVEL)]
    pub level: f64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long, value_enum, default_value_t = ScenarioArg::II)]
    pub scenario: ScenarioArg,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub p: usize,
    /// Number of causal SNPs drawn per replicate.
    #[arg(long, default_value_t = 30)]
    pub n_causal: usize,
    /// Size of the first interaction group.
    #[arg(long, default_value_t = 5)]
    pub groups: usize,
    #[arg(long, default_value_t = 0.3)]
    pub h2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.3)]
    pub pc_var: f64,
    #[arg(long, default_value_t = 3)]
    pub subpops: usize,
    #[arg(long, default_value_t = 0.1)]
    pub fst: f64,
    #[arg(long, default_value_t = rate_core::baseline::DEFAULT_LEVEL)]
    pub level: f64,
    /// Points on the FPR grid of the mean curves.
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
    #[command(flatten)]
    pub gp: GpArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

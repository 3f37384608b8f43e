use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "cocycle-lab", version, about = "Periodic Schrodinger cocycles, deformations and lemma-level checks")]
pub struct Cli {
    /// Worker threads for energy grids and verification runs (outputs do not depend on it).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Band edges as CSV `E_lo,E_hi`.
    Bands(BandsArgs),
    /// Integrated density of states on an energy grid.
    Ids(GridArgs),
    /// Lyapunov exponent on an energy grid.
    Lyapunov(GridArgs),
    /// Density of states on an energy grid.
    Density(DensityArgs),
    /// Growth functional at band energies.
    Growth(GrowthArgs),
    /// Deformations that write a new descriptor.
    #[command(subcommand)]
    Deform(DeformCommand),
    /// Solenoid tower stages built from padding and mixing.
    #[command(subcommand)]
    Tower(TowerCommand),
    /// Numerical checks, each writing a JSON report (slowdecay writes CSV).
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Trace, Lyapunov exponent and i.d.s. on an energy grid, with cached monodromies.
    Sweep(GridArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BandsArgs {
    #[arg(long)]
    pub potential: PathBuf,
    /// Defaults to the lower end of the spectral hull.
    #[arg(long, allow_hyphen_values = true)]
    pub emin: Option<f64>,
    /// Defaults to the upper end of the hull (required for continuum potentials).
    #[arg(long, allow_hyphen_values = true)]
    pub emax: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GridArgs {
    #[arg(long)]
    pub potential: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub emin: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub emax: Option<f64>,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DensityArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Quadrature nodes over one period (continuum potentials).
    #[arg(long, default_value_t = 256)]
    pub quad: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GrowthArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub t0: f64,
    #[arg(long, default_value_t = 1024)]
    pub samples: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Io {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum DeformCommand {
    /// `(δ, N, n)`-padding of a continuum potential.
    Pad(PadArgs),
    /// Single-gap padding of a continuum potential.
    PadSimple(PadSimpleArgs),
    /// `n`-fold repetition of a discrete family.
    Repeat(CountArgs),
    /// `n`-twist of a discrete family.
    Twist(CountArgs),
    /// `(δ, n)`-slide of a discrete family.
    Slide(SlideArgs),
    /// `n`-crumbling of a circle potential given as a family with `n0 = n1`.
    Crumble(CountArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PadArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long)]
    pub delta: f64,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub big_n: u32,
    #[arg(long)]
    pub n: u32,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PadSimpleArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub n: u32,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CountArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long)]
    pub n: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SlideArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub n: usize,
}

#[derive(Subcommand, Debug)]
pub enum TowerCommand {
    /// Realize a padding as a new tower stage.
    RealizePad(RealizePadArgs),
    /// Realize a mixing construction as a new tower stage.
    RealizeMix(RealizeMixArgs),
    /// Sample the top stage's potential along the flow as CSV `t,V(t)`.
    Trace(TraceArgs),
    /// Certify finite-stage mixedness of the top stage over its parent.
    Mixedness(MixednessArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RealizePadArgs {
    /// A tower, or a continuum potential used as the base stage.
    #[command(flatten)]
    pub io: Io,
    #[arg(long)]
    pub delta: f64,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub big_n: u32,
    #[arg(long)]
    pub n: u32,
    #[arg(long)]
    pub eps0: f64,
    /// Base speed when the input is a bare potential.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RealizeMixArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub eps0: f64,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub big_n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TraceArgs {
    #[command(flatten)]
    pub io: Io,
    /// Defaults to one flow period of the top stage.
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long, default_value_t = 1024)]
    pub samples: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MixednessArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub big_n: usize,
}

#[derive(Subcommand, Debug)]
pub enum VerifyCommand {
    /// Padding pipeline on a continuum potential: exclusions, growth events, averages.
    Lemma22(Lemma22Args),
    /// Composite discrete pipeline with the minimax certificate.
    Asd12(Asd12Args),
    /// Parseval identity for rotated products of random unimodular matrices.
    Parseval(ParsevalArgs),
    /// First-order term of the rotated product against a secant estimate.
    B1(B1Args),
    /// Spectral Parseval identity and band norm bound of a discrete potential.
    SpectralParseval(SpectralParsevalArgs),
    /// Slow-deformation residual table as CSV `m,n,residual,B_drift,theta_drift`.
    Slowdecay(SlowdecayArgs),
    /// Uniformness of the spectral density truncation.
    Uniform(UniformArgs),
    /// Crookedness certificate.
    Crooked(CrookedArgs),
    /// Good and nice certificates.
    GoodNice(GoodNiceArgs),
    /// Random increment model.
    WjModel(WjArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Lemma22Args {
    #[arg(long)]
    pub potential: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long, default_value_t = 2000)]
    pub grid: usize,
    #[arg(long, default_value_t = 20.0)]
    pub m: f64,
    #[arg(long, default_value_t = 0.5)]
    pub xi: f64,
    #[arg(long, default_value_t = 4.0)]
    pub c0: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub kappa: f64,
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    /// Growth thresholds use this `C′`; without it each step fits its own.
    #[arg(long, conflicts_with = "fit_c_prime")]
    pub c_prime: Option<f64>,
    /// Fit `C′` from single steps at δ = 0.0125 and 0.025 first.
    #[arg(long)]
    pub fit_c_prime: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Asd12Args {
    /// Starting family; defaults to `2λ₀ cos 2πt`.
    #[arg(long)]
    pub family: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub lambda0: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub emin: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub emax: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ParsevalArgs {
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 16384)]
    pub grid: usize,
    /// Instance `k` draws its matrices from seed `seed + k`.
    #[arg(long, default_value_t = 1)]
    pub instances: usize,
    #[arg(long, default_value_t = 0.3)]
    pub lambda_max: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct B1Args {
    #[arg(long, default_value_t = 32)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.3)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 0.123)]
    pub theta: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SpectralParsevalArgs {
    #[arg(long)]
    pub potential: PathBuf,
    /// Sites `n` at which both quantities are evaluated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0i64, 10, 25])]
    pub n: Vec<i64>,
    #[arg(long, default_value_t = 200)]
    pub quad: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothFamily {
    Continuum,
    Discrete,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SlowdecayArgs {
    #[arg(long, value_enum, default_value_t = SmoothFamily::Continuum)]
    pub family: SmoothFamily,
    #[arg(long, value_delimiter = ',', default_values_t = vec![2usize, 3])]
    pub m: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![16usize, 32, 64, 128, 256])]
    pub n: Vec<usize>,
    /// Energies sampled evenly inside the family's interval.
    #[arg(long, default_value_t = 8)]
    pub energies: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct UniformArgs {
    #[arg(long)]
    pub potential: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 10.0)]
    pub c: f64,
    #[arg(long, default_value_t = 20.0)]
    pub m: f64,
    #[arg(long, default_value_t = 8)]
    pub shifts: usize,
    #[arg(long, default_value_t = 64)]
    pub quad: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CrookedArgs {
    #[arg(long)]
    pub potential: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub eps1: f64,
    #[arg(long, default_value_t = 1.01)]
    pub c1: f64,
    #[arg(long, default_value_t = 20.0)]
    pub m: f64,
    #[arg(long, default_value_t = 400)]
    pub grid: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GoodNiceArgs {
    #[arg(long)]
    pub potential: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 20.0)]
    pub m: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct WjArgs {
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value_t = 1e5)]
    pub r: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_prime: f64,
    /// Number of increments summed; defaults to `floor(xi/δ)`.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, default_value_t = 3.0)]
    pub xi: f64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 3.0)]
    pub c0: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

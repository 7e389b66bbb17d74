use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hankel_path::{AdmmConfig, Algorithm, CaMode};

mod commands;
mod error;
mod io;

/// Certified regularization paths for Hankel nuclear-norm minimization.
#[derive(Debug, Parser)]
#[command(name = "hankel-path", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve at a single lambda with ADMM.
    Solve(SolveArgs),
    /// Compute a certified approximate path over [0, ||g_o||_2].
    Path(PathArgs),
    /// Write the impulse response of a sum of first-order modes.
    Synth(SynthArgs),
    /// Compute a path and check it against a dense brute-force sweep.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Single-column CSV of impulse-response samples (header optional).
    #[arg(long)]
    pub input: PathBuf,
    /// Drop the last sample if the length is even.
    #[arg(long)]
    pub truncate: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AdmmArgs {
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    /// Residual-balancing penalty updates.
    #[arg(long)]
    pub adaptive_rho: bool,
    #[arg(long, default_value_t = 1e-6)]
    pub eps_abs: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps_rel: f64,
    #[arg(long, default_value_t = 50_000)]
    pub max_iters: usize,
}

impl AdmmArgs {
    pub fn config(&self) -> AdmmConfig {
        AdmmConfig {
            rho: self.rho,
            adaptive_rho: self.adaptive_rho,
            eps_abs: self.eps_abs,
            eps_rel: self.eps_rel,
            max_iters: self.max_iters,
            ..AdmmConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub lambda: f64,
    #[command(flatten)]
    pub admm: AdmmArgs,
    /// Output directory for solution.json and sigma.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    /// Certify the cost error.
    Cost,
    /// Certify the squared singular-value error.
    Sv,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Cost => Algorithm::CostCertified,
            AlgorithmArg::Sv => Algorithm::SvCertified,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaModeArg {
    /// C_A = n.
    Full,
    /// C_A = p = (n + 1) / 2.
    Tight,
}

impl From<CaModeArg> for CaMode {
    fn from(m: CaModeArg) -> Self {
        match m {
            CaModeArg::Full => CaMode::Full,
            CaModeArg::Tight => CaMode::Tight,
        }
    }
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct ToleranceArgs {
    /// Absolute tolerance.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Tolerance as a fraction of J^max = ||H(g_o)||_*.
    #[arg(long)]
    pub eps_frac: Option<f64>,
    /// Target grid count M: eps = C_A ||g_o||^2 / M for sv, c_n ||g_o|| / M for cost.
    #[arg(long)]
    pub grid_count: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PathArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub algorithm: AlgorithmArg,
    #[command(flatten)]
    pub tolerance: ToleranceArgs,
    #[arg(long, value_enum, default_value = "full")]
    pub ca_mode: CaModeArg,
    /// Refine W by Frank-Wolfe at each cost-certified grid point.
    #[arg(long)]
    pub fw: bool,
    #[arg(long, default_value_t = 100)]
    pub fw_iters: usize,
    /// Never fall back to the W recovered from the ADMM dual.
    #[arg(long)]
    pub no_recover_w: bool,
    /// Use only the ball bound in singular-value certification.
    #[arg(long)]
    pub no_first_bound: bool,
    /// Relative rank cut for certificates.
    #[arg(long, default_value_t = 1e-4)]
    pub rank_tol: f64,
    #[command(flatten)]
    pub admm: AdmmArgs,
    /// Output directory for grid.csv, sigma.csv and report.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// A mode as AMPLITUDE,POLE; repeat for several modes.
    #[arg(long = "mode", required = true, allow_hyphen_values = true, value_parser = parse_mode)]
    pub modes: Vec<(f64, f64)>,
    /// Number of samples (odd).
    #[arg(long)]
    pub n: usize,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub path: PathArgs,
    /// Number of equispaced brute-force solves on [0, ||g_o||_2].
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    /// Absolute slack allowed on top of eps for solver inexactness.
    #[arg(long, default_value_t = 1e-3)]
    pub slack: f64,
}

fn parse_mode(s: &str) -> Result<(f64, f64), String> {
    let (a, p) = s.split_once(',').ok_or_else(|| format!("expected AMPLITUDE,POLE, got {s:?}"))?;
    let a = a.trim().parse::<f64>().map_err(|e| format!("amplitude {a:?}: {e}"))?;
    let p = p.trim().parse::<f64>().map_err(|e| format!("pole {p:?}: {e}"))?;
    Ok((a, p))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(args) => commands::solve(args),
        Command::Path(args) => commands::path(args),
        Command::Synth(args) => commands::synth(args),
        Command::Verify(args) => commands::verify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hankel-path: {e}");
            e.exit_code()
        }
    }
}

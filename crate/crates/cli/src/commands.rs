//! Subcommand implementations.

use std::path::{Path, PathBuf};

use hankel_path::hankel::{cn_constant, frobenius_constant};
use hankel_path::oracle::{dense_path, OracleConfig};
use hankel_path::path::run_path;
use hankel_path::spectral::{nuclear_norm, singular_values, sv_distance_sq};
use hankel_path::synth::{synthesize, Mode};
use hankel_path::{admm, AdmmConfig, Algorithm, CaMode, Error, ImpulseResponse, PathResult, ToleranceSpec, WMode};
use serde::Serialize;

use crate::error::CliError;
use crate::io::{csv_writer, fmt, impulse_response, read_samples, write_json};
use crate::{InputArgs, PathArgs, SolveArgs, SynthArgs, ToleranceArgs, VerifyArgs};

const SCHEMA: u32 = 1;

/// Thread count for verification sweeps; all logical cores when unset.
pub const THREADS_ENV: &str = "HANKEL_PATH_THREADS";

/// Everything needed to rerun a command.
#[derive(Debug, Serialize)]
struct Manifest {
    command: &'static str,
    input: String,
    truncate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    algorithm: Option<Algorithm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerance: Option<ToleranceInput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_a_mode: Option<CaMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fw: Option<FwSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recover_w: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    first_bound: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rank_tol: Option<f64>,
    admm: AdmmConfig,
    out: String,
    seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "snake_case")]
enum ToleranceInput {
    Eps(f64),
    EpsFrac(f64),
    GridCount(usize),
}

#[derive(Debug, Serialize)]
struct FwSettings {
    enabled: bool,
    iters: usize,
}

#[derive(Debug, Serialize)]
struct Column {
    name: &'static str,
    description: &'static str,
}

const fn col(name: &'static str, description: &'static str) -> Column {
    Column { name, description }
}

const GRID_COLUMNS: [Column; 6] = [
    col("lambda_start", "grid point lambda*_i; the accepted solution holds on [lambda_start, lambda_end)"),
    col("lambda_end", "right end of the interval (next grid point, or ||g_o||_2)"),
    col("objective", "||H(g*)||_* at the grid point"),
    col("bound_at_end", "certified bound at lambda_end: duality gap (cost) or squared singular-value bound (sv), <= eps"),
    col("gap_at_grid", "duality gap with W = 0 at the grid point itself"),
    col("admm_iterations", "ADMM sweeps for this grid point (0 at lambda = 0)"),
];

const SIGMA_COLUMNS: [Column; 2] = [
    col("lambda_star", "grid point"),
    col("sigma_k", "k-th singular value of H(g*), nonincreasing, same units as the samples"),
];

#[derive(Debug, Serialize)]
struct Residuals {
    primal: f64,
    dual: f64,
    eps_primal: f64,
    eps_dual: f64,
}

#[derive(Debug, Serialize)]
struct SolutionReport {
    schema: u32,
    lambda: f64,
    g_opt: Vec<f64>,
    objective: f64,
    sigma: Vec<f64>,
    residuals: Residuals,
    iterations: usize,
    converged: bool,
    rho: f64,
    manifest: Manifest,
}

#[derive(Debug, Serialize)]
struct PathReport<'a> {
    schema: u32,
    algorithm: Algorithm,
    eps: f64,
    eps_over_j_max: f64,
    j_max: f64,
    lambda_max: f64,
    c_a: f64,
    m: usize,
    m_bound: usize,
    w_mode: WMode,
    activation: Option<f64>,
    eps_min_ratio: f64,
    admm_iterations: Vec<usize>,
    aborted: Option<String>,
    files: Files,
    manifest: &'a Manifest,
}

#[derive(Debug, Serialize)]
struct Files {
    grid: &'static [Column],
    sigma: &'static [Column],
}

#[derive(Debug, Serialize)]
struct VerifyReport<'a> {
    schema: u32,
    algorithm: Algorithm,
    eps: f64,
    slack: f64,
    points: usize,
    m: usize,
    m_bound: usize,
    worst_error: f64,
    worst_lambda: f64,
    worst_oracle_gap: f64,
    passed: bool,
    manifest: &'a Manifest,
}

fn load(input: &InputArgs) -> Result<ImpulseResponse, CliError> {
    impulse_response(read_samples(&input.input)?, input.truncate)
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))
}

fn display(path: &Path) -> String {
    std::fs::canonicalize(path).unwrap_or_else(|_| PathBuf::from(path)).display().to_string()
}

fn base_manifest(command: &'static str, input: &InputArgs, admm: AdmmConfig, out: &Path) -> Manifest {
    Manifest {
        command,
        input: display(&input.input),
        truncate: input.truncate,
        lambda: None,
        algorithm: None,
        tolerance: None,
        c_a_mode: None,
        fw: None,
        recover_w: None,
        first_bound: None,
        rank_tol: None,
        admm,
        out: display(out),
        seed: OracleConfig::default().seed,
    }
}

pub fn solve(args: &SolveArgs) -> Result<(), CliError> {
    let g_o = load(&args.input)?;
    let cfg = args.admm.config();
    prepare_out(&args.out)?;
    let mut manifest = base_manifest("solve", &args.input, cfg.clone(), &args.out);
    manifest.lambda = Some(args.lambda);

    let report = admm::solve(&g_o, args.lambda, &cfg)?;
    let sigma: Vec<f64> = singular_values(&report.g_opt.hankel()).iter().copied().collect();

    let mut w = csv_writer(&args.out.join("sigma.csv"))?;
    write_row(&mut w, ["k".to_string(), "sigma".to_string()])?;
    for (k, s) in sigma.iter().enumerate() {
        write_row(&mut w, [(k + 1).to_string(), fmt(*s)])?;
    }
    flush(w)?;

    let converged = report.converged;
    let iterations = report.iterations;
    write_json(
        &args.out.join("solution.json"),
        &SolutionReport {
            schema: SCHEMA,
            lambda: args.lambda,
            g_opt: report.g_opt.as_slice().to_vec(),
            objective: report.objective,
            sigma,
            residuals: Residuals {
                primal: report.primal_residual,
                dual: report.dual_residual,
                eps_primal: report.eps_primal,
                eps_dual: report.eps_dual,
            },
            iterations,
            converged,
            rho: report.rho,
            manifest,
        },
    )?;
    if !converged {
        return Err(CliError::Solver(format!("ADMM did not converge in {iterations} iterations")));
    }
    Ok(())
}

/// Absolute `eps` for the requested tolerance.
fn resolve_eps(tol: &ToleranceArgs, g_o: &ImpulseResponse, algorithm: Algorithm, c_a: f64) -> (f64, ToleranceInput) {
    match (tol.eps, tol.eps_frac, tol.grid_count) {
        (Some(eps), _, _) => (eps, ToleranceInput::Eps(eps)),
        (_, Some(frac), _) => (frac * nuclear_norm(&g_o.hankel()), ToleranceInput::EpsFrac(frac)),
        (_, _, Some(m)) => {
            let scale = match algorithm {
                Algorithm::SvCertified => c_a * g_o.norm_squared(),
                Algorithm::CostCertified => cn_constant(g_o.order()) * g_o.norm(),
            };
            (scale / m as f64, ToleranceInput::GridCount(m))
        }
        (None, None, None) => unreachable!("clap requires one tolerance flag"),
    }
}

struct PreparedPath {
    g_o: ImpulseResponse,
    spec: ToleranceSpec,
    cfg: AdmmConfig,
    manifest: Manifest,
}

fn prepare_path(args: &PathArgs, command: &'static str) -> Result<PreparedPath, CliError> {
    let g_o = load(&args.input)?;
    if let Some(0) = args.tolerance.grid_count {
        return Err(CliError::Input("--grid-count must be at least 1".into()));
    }
    let algorithm = Algorithm::from(args.algorithm);
    let c_a_mode = CaMode::from(args.ca_mode);
    let c_a = frobenius_constant(g_o.len(), c_a_mode);
    let (eps, tolerance) = resolve_eps(&args.tolerance, &g_o, algorithm, c_a);
    let mut spec = ToleranceSpec::new(algorithm, eps);
    spec.c_a_mode = c_a_mode;
    spec.use_fw = args.fw;
    spec.fw_iters = args.fw_iters;
    spec.recover_w = !args.no_recover_w;
    spec.use_first_bound = !args.no_first_bound;
    spec.rank_tol = args.rank_tol;
    spec.validate()?;
    let cfg = args.admm.config();
    cfg.validate()?;
    prepare_out(&args.out)?;

    let mut manifest = base_manifest(command, &args.input, cfg.clone(), &args.out);
    manifest.algorithm = Some(algorithm);
    manifest.tolerance = Some(tolerance);
    manifest.c_a_mode = Some(c_a_mode);
    manifest.fw = Some(FwSettings { enabled: args.fw, iters: args.fw_iters });
    manifest.recover_w = Some(spec.recover_w);
    manifest.first_bound = Some(spec.use_first_bound);
    manifest.rank_tol = Some(spec.rank_tol);
    Ok(PreparedPath { g_o, spec, cfg, manifest })
}

/// Runs the path; an aborted run yields its partial result and the reason.
fn run(prep: &PreparedPath) -> Result<(PathResult, Option<String>), CliError> {
    match run_path(&prep.g_o, &prep.spec, &prep.cfg) {
        Ok(path) => Ok((path, None)),
        Err(Error::PathAborted { lambda, reason, partial }) => {
            Ok((*partial, Some(format!("aborted at lambda = {lambda}: {reason}"))))
        }
        Err(e) => Err(e.into()),
    }
}

fn write_path(out: &Path, path: &PathResult, aborted: Option<String>, manifest: &Manifest) -> Result<(), CliError> {
    let mut w = csv_writer(&out.join("grid.csv"))?;
    write_row(&mut w, GRID_COLUMNS.iter().map(|c| c.name.to_string()))?;
    for i in 0..path.grid.len() {
        write_row(
            &mut w,
            [
                fmt(path.grid[i]),
                fmt(path.ends[i]),
                fmt(path.objectives[i]),
                fmt(path.bound_trace[i]),
                fmt(path.gap_at_grid[i]),
                path.admm_reports[i].iterations.to_string(),
            ],
        )?;
    }
    flush(w)?;

    let p = path.sigma.first().map_or(0, |s| s.len());
    let mut w = csv_writer(&out.join("sigma.csv"))?;
    write_row(&mut w, std::iter::once("lambda_star".to_string()).chain((1..=p).map(|k| format!("sigma_{k}"))))?;
    for (lambda, sigma) in path.grid.iter().zip(&path.sigma) {
        write_row(&mut w, std::iter::once(fmt(*lambda)).chain(sigma.iter().map(|s| fmt(*s))))?;
    }
    flush(w)?;

    let report = PathReport {
        schema: SCHEMA,
        algorithm: path.algorithm,
        eps: path.eps,
        eps_over_j_max: if path.j_max > 0.0 { path.eps / path.j_max } else { f64::INFINITY },
        j_max: path.j_max,
        lambda_max: path.lambda_max,
        c_a: path.c_a,
        m: path.m,
        m_bound: path.m_bound,
        w_mode: path.w_mode,
        activation: path.activation,
        eps_min_ratio: path.eps_min_ratio(),
        admm_iterations: path.admm_reports.iter().map(|r| r.iterations).collect(),
        aborted,
        files: Files { grid: &GRID_COLUMNS, sigma: &SIGMA_COLUMNS },
        manifest,
    };
    write_json(&out.join("report.json"), &report)
}

pub fn path(args: &PathArgs) -> Result<(), CliError> {
    let prep = prepare_path(args, "path")?;
    let (path, aborted) = run(&prep)?;
    write_path(&args.out, &path, aborted.clone(), &prep.manifest)?;
    match aborted {
        Some(reason) => Err(CliError::Solver(reason)),
        None => Ok(()),
    }
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let modes: Vec<Mode> = args.modes.iter().map(|&(amplitude, pole)| Mode { amplitude, pole }).collect();
    let g = synthesize(&modes, args.n)?;
    let rows = std::iter::once("g".to_string()).chain(g.as_slice().iter().map(|v| fmt(*v)));
    match &args.out {
        Some(out) => {
            let mut w = csv_writer(out)?;
            for row in rows {
                write_row(&mut w, [row])?;
            }
            flush(w)
        }
        None => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(std::io::stdout());
            for row in rows {
                write_row(&mut w, [row])?;
            }
            flush(w)
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Input(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Solver(e.to_string()))
}

pub fn verify(args: &VerifyArgs) -> Result<(), CliError> {
    if args.points < 2 {
        return Err(CliError::Input("--points must be at least 2".into()));
    }
    let pool = thread_pool()?;
    let mut prep = prepare_path(&args.path, "verify")?;
    prep.manifest.seed = args.seed;
    let (path, aborted) = run(&prep)?;
    write_path(&args.path.out, &path, aborted.clone(), &prep.manifest)?;
    if let Some(reason) = aborted {
        return Err(CliError::Solver(reason));
    }

    let oracle_cfg = OracleConfig { seed: args.seed, ..OracleConfig::default() };
    let points = pool.install(|| dense_path(&prep.g_o, args.points, &oracle_cfg))?;

    let mut w = csv_writer(&args.path.out.join("verify.csv"))?;
    write_row(&mut w, ["lambda", "oracle_objective", "path_objective", "error", "oracle_gap"].map(String::from))?;
    let (mut worst, mut worst_lambda, mut worst_gap) = (f64::NEG_INFINITY, 0.0, 0.0);
    let mut passed = true;
    for pt in &points {
        let approx = path.approximation(pt.lambda);
        let h = approx.hankel();
        let error = match path.algorithm {
            Algorithm::CostCertified => nuclear_norm(&h) - pt.objective,
            Algorithm::SvCertified => sv_distance_sq(&h, &pt.solution.hankel())?,
        };
        if error > worst {
            (worst, worst_lambda) = (error, pt.lambda);
        }
        worst_gap = f64::max(worst_gap, pt.gap);
        passed &= error <= path.eps + args.slack + pt.gap;
        write_row(&mut w, [fmt(pt.lambda), fmt(pt.objective), fmt(nuclear_norm(&h)), fmt(error), fmt(pt.gap)])?;
    }
    flush(w)?;

    write_json(
        &args.path.out.join("verify.json"),
        &VerifyReport {
            schema: SCHEMA,
            algorithm: path.algorithm,
            eps: path.eps,
            slack: args.slack,
            points: points.len(),
            m: path.m,
            m_bound: path.m_bound,
            worst_error: worst,
            worst_lambda,
            worst_oracle_gap: worst_gap,
            passed,
            manifest: &prep.manifest,
        },
    )?;
    if passed {
        println!("verified: worst error {worst:e} at lambda = {worst_lambda} (eps = {:e})", path.eps);
        Ok(())
    } else {
        Err(CliError::Solver(format!(
            "certified bound violated: error {worst:e} at lambda = {worst_lambda} exceeds eps = {:e}",
            path.eps
        )))
    }
}

fn write_row<W: std::io::Write, I: IntoIterator<Item = String>>(w: &mut csv::Writer<W>, row: I) -> Result<(), CliError> {
    w.write_record(row).map_err(|e| CliError::Output(e.to_string()))
}

fn flush<W: std::io::Write>(mut w: csv::Writer<W>) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::Output(e.to_string()))
}

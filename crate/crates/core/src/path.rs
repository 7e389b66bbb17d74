//! Adaptive gridding of `lambda in [0, ||g_o||_2]`.
//!
//! Starting at `lambda_0 = 0` (where the solution is `g_o`), each step
//! solves the problem at the current grid point, builds a subgradient
//! certificate, and moves to the largest `lambda` at which the chosen
//! error bound reaches `eps`. The solution at `lambda_i` is then accepted
//! on `[lambda_i, lambda_{i+1})`. For `lambda >= ||g_o||_2` the solution is
//! `0`, so the last interval is closed off at `lambda_max` without a solve.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::admm::{AdmmConfig, AdmmReport, AdmmSolver};
use crate::certify::{
    ball_sv_bound, build_certificate_with_rank_tol, duality_gap, next_lambda_ball, next_lambda_cost,
    next_lambda_sv, recover_w_perp, sv_bound,
};
use crate::error::{Error, Result};
use crate::fw::{optimize_w, FwConfig};
use crate::hankel::{cn_constant, frobenius_constant, CaMode, ImpulseResponse};
use crate::spectral::{nuclear_norm, spectral_norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Certify the cost error with the duality gap.
    CostCertified,
    /// Certify the squared singular-value error.
    SvCertified,
}

/// Which `W` the a-priori grid-count bound for cost certification assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WMode {
    Zero,
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSpec {
    pub algorithm: Algorithm,
    pub eps: f64,
    pub c_a_mode: CaMode,
    /// Optimize `W` by Frank-Wolfe before placing each cost-certified grid point.
    pub use_fw: bool,
    /// When `W = 0` cannot move past a grid point, retry with the `W`
    /// recovered from the ADMM dual variable.
    pub recover_w: bool,
    pub fw_iters: usize,
    /// Use the `lambda`-independent first bound (and its stopping rule) in
    /// singular-value certification. Disabling it leaves only the ball bound.
    pub use_first_bound: bool,
    /// Relative rank cut for the certificate's `U`, `V`. ADMM solutions carry
    /// small spurious singular values, so this sits well above machine
    /// precision; whatever is cut shows up in the gap as the defect.
    pub rank_tol: f64,
}

impl ToleranceSpec {
    pub fn new(algorithm: Algorithm, eps: f64) -> Self {
        Self {
            algorithm,
            eps,
            c_a_mode: CaMode::Full,
            use_fw: false,
            recover_w: true,
            fw_iters: 100,
            use_first_bound: true,
            rank_tol: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(Error::InvalidParameter(format!("rank_tol must be in (0, 1), got {}", self.rank_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub algorithm: Algorithm,
    pub eps: f64,
    pub c_a: f64,
    /// `||g_o||_2`; the path is covered up to here.
    pub lambda_max: f64,
    /// `||H(g_o)||_*`, the largest possible cost.
    pub j_max: f64,
    /// Grid points `lambda*_i`, strictly increasing from `0`.
    pub grid: Vec<f64>,
    pub solutions: Vec<ImpulseResponse>,
    pub sigma: Vec<DVector<f64>>,
    pub objectives: Vec<f64>,
    /// Right endpoint of each interval `[grid[i], ends[i])`.
    pub ends: Vec<f64>,
    /// Bound value (gap or singular-value bound) at `ends[i]`.
    pub bound_trace: Vec<f64>,
    /// `d(lambda*_i, W = 0)`: the gap at the grid point itself.
    pub gap_at_grid: Vec<f64>,
    pub admm_reports: Vec<AdmmReport>,
    /// Number of solves, excluding the closed-form point `lambda = 0`.
    pub m: usize,
    /// A-priori bound on `m` for the `W` actually used.
    pub m_bound: usize,
    /// Cost certification: `Zero` unless some interval needed a nonzero `W`.
    pub w_mode: WMode,
    /// Where singular-value gridding stopped because the first bound took over.
    pub activation: Option<f64>,
}

impl PathResult {
    fn empty(g_o: &ImpulseResponse, spec: &ToleranceSpec, c_a: f64, m_bound: usize, w_mode: WMode) -> Self {
        Self {
            algorithm: spec.algorithm,
            eps: spec.eps,
            c_a,
            lambda_max: g_o.norm(),
            j_max: nuclear_norm(&g_o.hankel()),
            grid: Vec::new(),
            solutions: Vec::new(),
            sigma: Vec::new(),
            objectives: Vec::new(),
            ends: Vec::new(),
            bound_trace: Vec::new(),
            gap_at_grid: Vec::new(),
            admm_reports: Vec::new(),
            m: 0,
            m_bound,
            w_mode,
            activation: None,
        }
    }

    /// Index of the interval containing `lambda`, or `None` past `lambda_max`.
    pub fn interval_of(&self, lambda: f64) -> Option<usize> {
        if lambda < 0.0 || lambda >= self.lambda_max || self.grid.is_empty() {
            return None;
        }
        Some(self.grid.partition_point(|&g| g <= lambda) - 1)
    }

    /// The accepted approximate solution at `lambda` (zero beyond `lambda_max`).
    pub fn approximation(&self, lambda: f64) -> ImpulseResponse {
        match self.interval_of(lambda) {
            Some(i) => self.solutions[i].clone(),
            None if lambda >= self.lambda_max => {
                ImpulseResponse::zeros(self.solutions.first().map_or(1, |s| s.len())).expect("odd length")
            }
            None => self.solutions[0].clone(),
        }
    }

    /// Largest gap at a grid point, relative to `j_max`.
    pub fn eps_min_ratio(&self) -> f64 {
        let worst = self.gap_at_grid.iter().copied().fold(0.0, f64::max);
        if self.j_max > 0.0 {
            worst / self.j_max
        } else {
            0.0
        }
    }
}

/// `floor(2 c_n ||g_o|| / eps)` (general `W`) or `floor(c_n ||g_o|| / eps)` (`W = 0`), at least 1.
pub fn max_evals_cost(g_o: &ImpulseResponse, eps: f64, w_mode: WMode) -> usize {
    let factor = match w_mode {
        WMode::Zero => 1.0,
        WMode::General => 2.0,
    };
    floor_at_least_one(factor * cn_constant(g_o.order()) * g_o.norm() / eps)
}

/// `floor(C_A ||g_o||^2 / eps)`, at least 1.
pub fn max_evals_sv(g_o: &ImpulseResponse, eps: f64, c_a: f64) -> usize {
    floor_at_least_one(c_a * g_o.norm_squared() / eps)
}

/// Relative slack for rounding in grid counts and at the end of the path.
const ROUNDING_RTOL: f64 = 1e-12;

/// Floors `x`, treating values within rounding of the next integer as that
/// integer, so `eps = C ||g_o||^2 / M` gives exactly `M`.
fn floor_at_least_one(x: f64) -> usize {
    if x.is_finite() {
        ((x * (1.0 + ROUNDING_RTOL)).floor() as usize).max(1)
    } else {
        usize::MAX
    }
}

/// Runs the cost- or singular-value-certified gridding loop.
pub fn run_path(g_o: &ImpulseResponse, spec: &ToleranceSpec, cfg: &AdmmConfig) -> Result<PathResult> {
    spec.validate()?;
    let n = g_o.len();
    let p = g_o.order();
    let c_a = frobenius_constant(n, spec.c_a_mode);
    let w_mode = if spec.use_fw { WMode::General } else { WMode::Zero };
    let m_bound = match spec.algorithm {
        Algorithm::CostCertified => max_evals_cost(g_o, spec.eps, w_mode),
        Algorithm::SvCertified => max_evals_sv(g_o, spec.eps, c_a),
    };
    // The guard allows for a switch to the general-W bound mid-path.
    let guard = match spec.algorithm {
        Algorithm::CostCertified => max_evals_cost(g_o, spec.eps, WMode::General),
        Algorithm::SvCertified => m_bound,
    };
    let mut out = PathResult::empty(g_o, spec, c_a, m_bound, w_mode);
    let lambda_max = out.lambda_max;
    let mut solver = AdmmSolver::new(cfg.clone())?;
    let fw_cfg = FwConfig { max_iters: spec.fw_iters, objective_trace: false };

    let mut lambda = 0.0;
    loop {
        let report = if lambda == 0.0 {
            closed_form_origin(g_o, p)
        } else {
            let report = solver.solve(g_o, lambda)?;
            if !report.converged {
                let reason = format!(
                    "ADMM did not converge in {} iterations (r_p = {:e} > {:e} or r_d = {:e} > {:e})",
                    report.iterations, report.primal_residual, report.eps_primal, report.dual_residual, report.eps_dual
                );
                return Err(abort(out, lambda, reason));
            }
            report
        };

        let cert = build_certificate_with_rank_tol(lambda, &report.g_opt, None, certificate_rank_tol(&report, spec))?;
        let gap0 = duality_gap(&cert, g_o, lambda);

        let (next, closure) = match spec.algorithm {
            Algorithm::CostCertified => {
                let mut best = cert.clone();
                let mut next = next_lambda_cost(&cert, g_o, spec.eps, lambda_max)?;
                if spec.recover_w && next <= lambda && lambda > 0.0 {
                    let rec = recover_w_perp(&cert, g_o, &report.dual)?;
                    let alt = cert.with_w(&rec.w)?;
                    let candidate = next_lambda_cost(&alt, g_o, spec.eps, lambda_max)?;
                    if candidate > next {
                        next = candidate;
                        best = alt;
                    }
                }
                if spec.use_fw && next < lambda_max {
                    let fw = optimize_w(&best, g_o, next.max(lambda), &fw_cfg)?;
                    let candidate = next_lambda_cost(&fw.cert, g_o, spec.eps, lambda_max)?;
                    if candidate > next {
                        next = candidate;
                        best = fw.cert;
                    }
                }
                if best.w.iter().any(|&v| v != 0.0) && out.w_mode == WMode::Zero {
                    out.w_mode = WMode::General;
                    out.m_bound = max_evals_cost(g_o, spec.eps, WMode::General);
                }
                let next = snap_to_end(next, lambda_max);
                let closure = duality_gap(&best, g_o, next);
                if next <= lambda {
                    let reason = format!(
                        "gap at the grid point d = {gap0:e} already exceeds eps = {:e}; raise eps or tighten the solver",
                        spec.eps
                    );
                    return Err(abort(out, lambda, reason));
                }
                (next, closure)
            }
            Algorithm::SvCertified => {
                if spec.use_first_bound {
                    let next = snap_to_end(next_lambda_sv(&cert, spec.eps, c_a, lambda_max)?, lambda_max);
                    if cert.first_sv_bound() <= spec.eps {
                        out.activation = Some(lambda);
                    }
                    (next, sv_bound(&cert, next, c_a))
                } else {
                    let next = snap_to_end(next_lambda_ball(&cert, spec.eps, c_a, lambda_max)?, lambda_max);
                    (next, ball_sv_bound(&cert, next, c_a))
                }
            }
        };

        out.grid.push(lambda);
        out.sigma.push(cert.sigma_star.clone());
        out.objectives.push(cert.objective_star);
        out.solutions.push(report.g_opt.clone());
        out.ends.push(next);
        out.bound_trace.push(closure);
        out.gap_at_grid.push(gap0);
        out.admm_reports.push(report);
        out.m = out.grid.len() - 1;

        if next >= lambda_max {
            break;
        }
        if out.m > 10 * guard.max(1) {
            let reason = format!("grid exceeded ten times the a-priori bound {guard}");
            return Err(abort(out, next, reason));
        }
        lambda = next;
    }
    Ok(out)
}

/// Relative rank cut for the certificate at an ADMM solution.
///
/// The split variable `H` is exactly low rank, and by Weyl's inequality the
/// singular values of `H(g)` differ from those of `H` by at most the primal
/// residual. Values within a few residuals of zero are treated as zero.
fn certificate_rank_tol(report: &AdmmReport, spec: &ToleranceSpec) -> f64 {
    let sigma_max = spectral_norm(&report.g_opt.hankel());
    if sigma_max == 0.0 {
        return spec.rank_tol;
    }
    spec.rank_tol.max(10.0 * report.primal_residual / sigma_max)
}

/// A next grid point within rounding of `lambda_max` is `lambda_max`: the
/// solution there is zero and needs no solve.
fn snap_to_end(next: f64, lambda_max: f64) -> f64 {
    if next >= lambda_max * (1.0 - ROUNDING_RTOL) {
        lambda_max
    } else {
        next
    }
}

fn closed_form_origin(g_o: &ImpulseResponse, p: usize) -> AdmmReport {
    let h = g_o.hankel().into_matrix();
    AdmmReport {
        g_opt: g_o.clone(),
        iterations: 0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        eps_primal: 0.0,
        eps_dual: 0.0,
        converged: true,
        objective: nuclear_norm(&h),
        rho: 0.0,
        dual: DMatrix::zeros(p, p),
        split: h,
        trace: Vec::new(),
    }
}

fn abort(partial: PathResult, lambda: f64, reason: String) -> Error {
    Error::PathAborted { lambda, reason, partial: Box::new(partial) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ir(v: &[f64]) -> ImpulseResponse {
        ImpulseResponse::new(v.to_vec()).unwrap()
    }

    #[test]
    fn max_evals_cost_cases() {
        // p = 2 -> c_n = sqrt(6); ||g_o|| = 1.
        let g_o = ir(&[1.0, 0.0, 0.0]);
        assert_eq!(max_evals_cost(&g_o, 0.5, WMode::Zero), 4);
        assert_eq!(max_evals_cost(&g_o, 0.5, WMode::General), 9);
        assert_eq!(max_evals_cost(&g_o, 6f64.sqrt(), WMode::Zero), 1);
        assert_eq!(max_evals_cost(&g_o, 100.0, WMode::Zero), 1);
    }

    #[test]
    fn max_evals_sv_cases() {
        let g_o = ir(&[1.0, 0.0, 0.0]);
        assert_eq!(max_evals_sv(&g_o, 0.5, 3.0), 6);
        assert_eq!(max_evals_sv(&g_o, 3.0 / 7.0, 3.0), 7);
        assert_eq!(max_evals_sv(&g_o, 1e9, 3.0), 1);
    }

    #[test]
    fn huge_eps_gives_single_point() {
        let g_o = ir(&[1.0, 0.5, 0.25, 0.125, 0.0625]);
        let eps = cn_constant(3) * g_o.norm();
        let spec = ToleranceSpec::new(Algorithm::CostCertified, eps);
        let path = run_path(&g_o, &spec, &AdmmConfig::default()).unwrap();
        assert_eq!(path.grid, vec![0.0]);
        assert_eq!(path.m, 0);
        assert!(path.m <= path.m_bound);
        assert_eq!(path.solutions[0], g_o);
    }

    #[test]
    fn zero_input_is_trivial() {
        let g_o = ir(&[0.0, 0.0, 0.0]);
        let spec = ToleranceSpec::new(Algorithm::SvCertified, 0.1);
        let path = run_path(&g_o, &spec, &AdmmConfig::default()).unwrap();
        assert_eq!(path.grid, vec![0.0]);
        assert_eq!(path.lambda_max, 0.0);
    }

    #[test]
    fn invalid_spec_rejected() {
        let g_o = ir(&[1.0, 0.0, 0.0]);
        let spec = ToleranceSpec::new(Algorithm::SvCertified, 0.0);
        assert!(matches!(run_path(&g_o, &spec, &AdmmConfig::default()), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn interval_lookup() {
        let g_o = ir(&[1.0, 0.5, 0.25, 0.125, 0.0625]);
        let mut spec = ToleranceSpec::new(Algorithm::SvCertified, 0.2);
        spec.use_first_bound = false;
        let path = run_path(&g_o, &spec, &AdmmConfig::default()).unwrap();
        assert!(path.grid.len() > 2);
        assert_eq!(path.interval_of(0.0), Some(0));
        assert_eq!(path.interval_of(path.grid[1]), Some(1));
        assert_eq!(path.interval_of(path.lambda_max), None);
        assert_eq!(path.approximation(path.lambda_max).norm(), 0.0);
        let last = *path.grid.last().unwrap();
        assert_eq!(path.interval_of(0.5 * (last + path.lambda_max)), Some(path.grid.len() - 1));
    }

    #[test]
    fn ball_only_grid_is_closed_form() {
        let g_o = ir(&[1.0, -0.5, 0.3, 0.8, 0.2]);
        let mut spec = ToleranceSpec::new(Algorithm::SvCertified, 0.3);
        spec.use_first_bound = false;
        let path = run_path(&g_o, &spec, &AdmmConfig::default()).unwrap();
        for (i, &l) in path.grid.iter().enumerate() {
            let expected = (i as f64 * 0.3 / 5.0).sqrt();
            assert!((l - expected).abs() <= 1e-12, "grid[{i}] = {l}, expected {expected}");
        }
        assert!(path.m <= path.m_bound);
        assert!(*path.ends.last().unwrap() >= path.lambda_max);
    }

    #[test]
    fn two_mode_system_respects_grid_count() {
        use crate::synth::{synthesize, Mode};
        let g_o = synthesize(&[Mode { amplitude: 1.0, pole: 0.7 }, Mode { amplitude: -0.6, pole: -0.4 }], 5).unwrap();
        let eps = 5.0 * g_o.norm_squared() / 30.0;
        let path = run_path(&g_o, &ToleranceSpec::new(Algorithm::SvCertified, eps), &AdmmConfig::default()).unwrap();
        assert_eq!(path.m_bound, 30);
        assert!(path.m <= 30);
        assert!(path.bound_trace.iter().all(|&b| b <= eps + 1e-9));
    }

    #[test]
    fn cost_path_closes_every_interval() {
        let g_o = ir(&[1.0, 0.6, -0.2, 0.4, 0.1, 0.3, -0.1]);
        let eps = 0.25 * nuclear_norm(&g_o.hankel());
        let path = run_path(&g_o, &ToleranceSpec::new(Algorithm::CostCertified, eps), &AdmmConfig::default()).unwrap();
        assert_eq!(path.grid[0], 0.0);
        assert_eq!(path.solutions[0], g_o);
        assert!(path.grid.windows(2).all(|w| w[0] < w[1]));
        assert!(path.ends.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(&path.ends[..path.ends.len() - 1], &path.grid[1..]);
        assert!(path.bound_trace.iter().all(|&b| b <= eps + 1e-9));
        assert!(path.m <= path.m_bound);
    }

    #[test]
    fn stall_aborts_with_partial_result() {
        // Once the solution loses rank, W = 0 leaves a gap at the grid point
        // that a small eps cannot absorb.
        let g_o = ir(&[1.0, 0.6, -0.2, 0.4, 0.1, 0.3, -0.1]);
        let cfg = AdmmConfig::default();
        let mut spec = ToleranceSpec::new(Algorithm::CostCertified, 0.02 * nuclear_norm(&g_o.hankel()));
        spec.recover_w = false;
        match run_path(&g_o, &spec, &cfg) {
            Err(Error::PathAborted { partial, .. }) => assert!(!partial.grid.is_empty()),
            other => panic!("expected an abort, got {other:?}"),
        }
    }

    #[test]
    fn recovered_w_moves_past_a_stall() {
        let g_o = ir(&[1.0, 0.6, -0.2, 0.4, 0.1, 0.3, -0.1]);
        let eps = 0.02 * nuclear_norm(&g_o.hankel());
        let path = run_path(&g_o, &ToleranceSpec::new(Algorithm::CostCertified, eps), &AdmmConfig::default()).unwrap();
        assert_eq!(path.w_mode, WMode::General);
        assert_eq!(path.m_bound, max_evals_cost(&g_o, eps, WMode::General));
        assert!(path.m <= path.m_bound);
        assert!(path.bound_trace.iter().all(|&b| b <= eps + 1e-9));
    }
}

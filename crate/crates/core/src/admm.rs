//! ADMM for `minimize ||H(g)||_*  s.t.  ||g - g_o||_2 <= lambda`.
//!
//! The problem is split as `minimize ||H||_*` subject to the ball constraint
//! and `H(g) = H`, with augmented Lagrangian
//!
//! ```text
//! L(H, g, Z) = ||H||_* + tr(Z^T (H(g) - H)) + rho/2 ||H(g) - H||_F^2
//! ```
//!
//! Each sweep does an SVT step on `H`, an exact ball-constrained quadratic
//! step on `g` (diagonal because `H* H = diag(multiplicities)`), and a dual
//! ascent step on `Z`. `Z` is kept unscaled, so it directly approximates a
//! subgradient of the nuclear norm at the solution.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hankel::{adjoint, hankel, multiplicities, ImpulseResponse};
use crate::spectral::{nuclear_norm, svt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    /// Penalty parameter; the starting value when `adaptive_rho` is set.
    pub rho: f64,
    pub adaptive_rho: bool,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iters: usize,
    /// Relative tolerance on `||x||_2 = lambda` in the `g`-update.
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// Record `||H(g^k)||_*` after every sweep.
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            adaptive_rho: false,
            eps_abs: 1e-6,
            eps_rel: 1e-5,
            max_iters: 50_000,
            newton_tol: 1e-12,
            newton_max_iters: 100,
            record_trace: false,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho", self.rho),
            ("eps_abs", self.eps_abs),
            ("eps_rel", self.eps_rel),
            ("newton_tol", self.newton_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if self.newton_max_iters == 0 {
            return Err(Error::InvalidParameter("newton_max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AdmmReport {
    pub g_opt: ImpulseResponse,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub converged: bool,
    /// `||H(g_opt)||_*`.
    pub objective: f64,
    /// Final penalty (differs from the configured one only with `adaptive_rho`).
    pub rho: f64,
    /// Dual variable `Z` at exit.
    pub dual: DMatrix<f64>,
    /// Split variable `H` at exit.
    pub split: DMatrix<f64>,
    pub trace: Vec<f64>,
}

/// Primal/dual residual norms and their stopping thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
}

impl Residuals {
    pub fn converged(&self) -> bool {
        self.primal <= self.eps_primal && self.dual <= self.eps_dual
    }
}

/// Stopping quantities after one sweep.
///
/// `hg_next` is `H(g^{k+1})`, `h_prev`/`h_next` are the split iterates
/// `H^k`/`H^{k+1}` and `z_next` is `Z^{k+1}`.
pub fn residuals(
    hg_next: &DMatrix<f64>,
    h_prev: &DMatrix<f64>,
    h_next: &DMatrix<f64>,
    z_next: &DMatrix<f64>,
    rho: f64,
    eps_abs: f64,
    eps_rel: f64,
) -> Residuals {
    let p = hg_next.nrows() as f64;
    let n = 2.0 * p - 1.0;
    let primal = (hg_next - h_next).norm();
    let dual = rho * adjoint(&(h_prev - h_next)).norm();
    let eps_primal = p * eps_abs + eps_rel * hg_next.norm().max(h_next.norm());
    let eps_dual = n.sqrt() * eps_abs + eps_rel * adjoint(z_next).norm();
    Residuals { primal, dual, eps_primal, eps_dual }
}

/// `H^{k+1} = svt(H(g^k) + Z^k / rho, 1 / rho)`.
pub fn h_update(g: &DVector<f64>, z: &DMatrix<f64>, rho: f64) -> DMatrix<f64> {
    svt(&(hankel(g) + z / rho), 1.0 / rho)
}

/// Exact minimizer of `L(H, g, Z)` over the ball `||g - g_o|| <= lambda`.
pub fn g_update(
    g_o: &DVector<f64>,
    h: &DMatrix<f64>,
    z: &DMatrix<f64>,
    rho: f64,
    lambda: f64,
    cfg: &AdmmConfig,
) -> Result<DVector<f64>> {
    if lambda == 0.0 {
        return Ok(g_o.clone());
    }
    let p = h.nrows();
    let q = adjoint(&(z + rho * hankel(g_o) - rho * h));
    let diag = multiplicities(p) * rho;
    let x = ball_quadratic_min(&q, &diag, lambda, cfg.newton_tol, cfg.newton_max_iters)?;
    Ok(g_o + x)
}

/// Minimizes `x^T D x / 2 + q^T x` over `||x||_2 <= lambda` for positive diagonal `D`.
pub(crate) fn ball_quadratic_min(
    q: &DVector<f64>,
    diag: &DVector<f64>,
    lambda: f64,
    tol: f64,
    max_iters: usize,
) -> Result<DVector<f64>> {
    let unconstrained = -q.component_div(diag);
    if unconstrained.norm() <= lambda {
        return Ok(unconstrained);
    }
    let t = secular_root(q, diag, lambda, tol, max_iters)?;
    let mut x = DVector::from_fn(q.len(), |i, _| -q[i] / (diag[i] + t));
    let norm = x.norm();
    if norm > lambda {
        x *= lambda / norm;
    }
    Ok(x)
}

fn secular_norm(q: &DVector<f64>, diag: &DVector<f64>, t: f64) -> (f64, f64) {
    let mut f2 = 0.0;
    let mut cube = 0.0;
    for (qi, di) in q.iter().zip(diag.iter()) {
        let s = t + di;
        let r = qi / s;
        f2 += r * r;
        cube += r * r / s;
    }
    let f = f2.sqrt();
    (f, -cube / f)
}

/// Unique `t >= 0` with `f(t) = ||(D + tI)^{-1} q||_2 = lambda`, assuming `f(0) > lambda`.
///
/// Newton on `f(t) - lambda` from `t0 = max(0, ||q||/lambda - min D)`,
/// safeguarded by the bracket `[0, ||q||/lambda]`, with plain bisection as
/// the fallback.
pub(crate) fn secular_root(
    q: &DVector<f64>,
    diag: &DVector<f64>,
    lambda: f64,
    tol: f64,
    max_iters: usize,
) -> Result<f64> {
    let qn = q.norm();
    let dmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (0.0f64, qn / lambda);
    let mut t = (qn / lambda - dmin).max(0.0);
    for _ in 0..max_iters {
        let (f, df) = secular_norm(q, diag, t);
        let resid = f - lambda;
        if resid.abs() <= tol * lambda {
            return Ok(t);
        }
        if resid > 0.0 {
            lo = lo.max(t);
        } else {
            hi = hi.min(t);
        }
        let step = t - resid / df;
        t = if step.is_finite() && step > lo && step < hi { step } else { 0.5 * (lo + hi) };
    }

    let (mut lo, mut hi) = (0.0f64, qn / lambda);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (f, _) = secular_norm(q, diag, mid);
        if (f - lambda).abs() <= tol * lambda || hi - lo <= f64::EPSILON * hi {
            return Ok(mid);
        }
        if f > lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numerical(format!(
        "g-update root search failed: lambda = {lambda:e}, ||q|| = {qn:e}, bracket = [{lo:e}, {hi:e}]"
    )))
}

#[derive(Debug, Clone)]
struct State {
    g: DVector<f64>,
    h: DMatrix<f64>,
    z: DMatrix<f64>,
    rho: f64,
}

/// ADMM solver that keeps its iterates between calls for warm starting.
#[derive(Debug, Clone)]
pub struct AdmmSolver {
    cfg: AdmmConfig,
    state: Option<State>,
    warm_start: bool,
}

impl AdmmSolver {
    pub fn new(cfg: AdmmConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, state: None, warm_start: true })
    }

    /// Always restart from `H = 0, g = 0, Z = 0`.
    pub fn cold(cfg: AdmmConfig) -> Result<Self> {
        let mut solver = Self::new(cfg)?;
        solver.warm_start = false;
        Ok(solver)
    }

    pub fn config(&self) -> &AdmmConfig {
        &self.cfg
    }

    pub fn reset(&mut self) {
        self.state = None;
    }

    pub fn solve(&mut self, g_o: &ImpulseResponse, lambda: f64) -> Result<AdmmReport> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let n = g_o.len();
        let p = g_o.order();
        let g_o_vec = g_o.as_vector();

        // Both ends of the path are known in closed form.
        if lambda == 0.0 {
            return Ok(self.closed_form(g_o.clone(), p));
        }
        if lambda >= g_o.norm() {
            return Ok(self.closed_form(ImpulseResponse::zeros(n)?, p));
        }

        let cfg = &self.cfg;
        let mut st = match self.state.take() {
            Some(s) if self.warm_start && s.g.len() == n => s,
            _ => State {
                g: DVector::zeros(n),
                h: DMatrix::zeros(p, p),
                z: DMatrix::zeros(p, p),
                rho: cfg.rho,
            },
        };

        let mut trace = Vec::new();
        let mut res = Residuals { primal: f64::INFINITY, dual: f64::INFINITY, eps_primal: 0.0, eps_dual: 0.0 };
        let mut iterations = 0;
        for k in 1..=cfg.max_iters {
            iterations = k;
            let h_next = h_update(&st.g, &st.z, st.rho);
            let g_next = g_update(g_o_vec, &h_next, &st.z, st.rho, lambda, cfg)?;
            let hg = hankel(&g_next);
            let z_next = &st.z + st.rho * (&hg - &h_next);
            res = residuals(&hg, &st.h, &h_next, &z_next, st.rho, cfg.eps_abs, cfg.eps_rel);

            if !(res.primal.is_finite() && res.dual.is_finite()) || g_next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "ADMM iterate became non-finite at iteration {k} (lambda = {lambda:e}, rho = {:e})",
                    st.rho
                )));
            }

            st.g = g_next;
            st.h = h_next;
            st.z = z_next;
            if cfg.record_trace {
                trace.push(nuclear_norm(&hg));
            }
            if res.converged() {
                break;
            }
            if cfg.adaptive_rho {
                // Z is unscaled, so it needs no rescaling when rho changes.
                if res.primal > 10.0 * res.dual {
                    st.rho *= 2.0;
                } else if res.dual > 10.0 * res.primal {
                    st.rho /= 2.0;
                }
            }
        }

        let g_opt = ImpulseResponse::from_vector(st.g.clone())?;
        let objective = nuclear_norm(&hankel(&st.g));
        let report = AdmmReport {
            g_opt,
            iterations,
            primal_residual: res.primal,
            dual_residual: res.dual,
            eps_primal: res.eps_primal,
            eps_dual: res.eps_dual,
            converged: res.converged(),
            objective,
            rho: st.rho,
            dual: st.z.clone(),
            split: st.h.clone(),
            trace,
        };
        if self.warm_start {
            self.state = Some(st);
        }
        Ok(report)
    }

    fn closed_form(&self, g_opt: ImpulseResponse, p: usize) -> AdmmReport {
        let h = g_opt.hankel().into_matrix();
        AdmmReport {
            objective: nuclear_norm(&h),
            g_opt,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            eps_primal: 0.0,
            eps_dual: 0.0,
            converged: true,
            rho: self.cfg.rho,
            dual: DMatrix::zeros(p, p),
            split: h,
            trace: Vec::new(),
        }
    }
}

/// One-shot solve from the zero initialization.
pub fn solve(g_o: &ImpulseResponse, lambda: f64, cfg: &AdmmConfig) -> Result<AdmmReport> {
    AdmmSolver::cold(cfg.clone())?.solve(g_o, lambda)
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::spectral::spectral_norm;
    use proptest::prelude::*;

    fn plain_bisection(q: &DVector<f64>, d: &DVector<f64>, lambda: f64) -> f64 {
        let f = |t: f64| q.iter().zip(d.iter()).map(|(qi, di)| (qi / (t + di)).powi(2)).sum::<f64>().sqrt();
        let (mut lo, mut hi) = (0.0, q.norm() / lambda);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > lambda {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn secular_case() -> impl Strategy<Value = (DVector<f64>, DVector<f64>, f64)> {
        (1usize..=15).prop_flat_map(|n| {
            (
                prop::collection::vec(-10.0..10.0f64, n).prop_map(DVector::from_vec),
                prop::collection::vec(0.1..10.0f64, n).prop_map(DVector::from_vec),
                0.01..5.0f64,
            )
        })
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, f64)> {
        (1usize..=3).prop_flat_map(|h| (prop::collection::vec(-3.0..3.0f64, 2 * h + 1), 0.05..0.95f64))
    }

    proptest! {
        #[test]
        fn secular_root_matches_bisection((q, d, lambda) in secular_case()) {
            let unconstrained = q.component_div(&d).norm();
            prop_assume!(unconstrained > lambda * (1.0 + 1e-6));
            let t = secular_root(&q, &d, lambda, 1e-14, 100).unwrap();
            let reference = plain_bisection(&q, &d, lambda);
            prop_assert!((t - reference).abs() <= 1e-10 * (1.0 + reference), "{t} vs {reference}");
            let x = ball_quadratic_min(&q, &d, lambda, 1e-14, 100).unwrap();
            prop_assert!((x.norm() - lambda).abs() <= 1e-12 * lambda);
        }

        #[test]
        fn ball_minimizer_is_feasible((q, d, lambda) in secular_case()) {
            let x = ball_quadratic_min(&q, &d, lambda, 1e-12, 100).unwrap();
            prop_assert!(x.norm() <= lambda * (1.0 + 1e-12));
        }

        #[test]
        fn exit_is_feasible_and_dual_is_a_subgradient((g, frac) in instance()) {
            let g_o = ImpulseResponse::new(g).unwrap();
            prop_assume!(g_o.norm() > 1e-3);
            let lambda = frac * g_o.norm();
            let cfg = AdmmConfig { eps_abs: 1e-10, eps_rel: 1e-10, max_iters: 200_000, ..Default::default() };
            let r = solve(&g_o, lambda, &cfg).unwrap();
            let dist = (r.g_opt.as_vector() - g_o.as_vector()).norm();
            prop_assert!(dist <= lambda * (1.0 + 1e-9));
            prop_assert!(r.converged);
            let hg = r.g_opt.hankel().into_matrix();
            prop_assert!(spectral_norm(&r.dual) <= 1.0 + 1e-6);
            prop_assert!(r.dual.dot(&hg) >= r.objective - 1e-6 * (1.0 + r.objective));
        }
    }

    #[test]
    fn identity_hankel_against_closed_form() {
        // H(g) = [[a, b], [b, c]] has nuclear norm max(|a + c|, sqrt((a - c)^2 + 4 b^2)).
        // From g_o = [1, 0, 1], moving b only raises the second term, so the best
        // move is along -(1, 0, 1): the optimum is 2 - sqrt(2) * lambda.
        let g_o = ImpulseResponse::new(vec![1.0, 0.0, 1.0]).unwrap();
        let r = solve(&g_o, 0.5, &AdmmConfig::default()).unwrap();
        assert!(r.converged);
        assert!((r.objective - (2.0 - 0.5 * 2f64.sqrt())).abs() <= 1e-3);
    }

    #[test]
    fn windowed_best_objective_is_nonincreasing() {
        let g_o = ImpulseResponse::new(vec![1.0, -0.4, 0.8, 0.3, -0.2, 0.5, 0.1]).unwrap();
        let cfg = AdmmConfig { eps_abs: 1e-12, eps_rel: 1e-12, max_iters: 600, record_trace: true, ..Default::default() };
        let r = solve(&g_o, 0.6, &cfg).unwrap();
        let mut best = f64::INFINITY;
        let window_best: Vec<f64> = r
            .trace
            .chunks(50)
            .map(|w| {
                best = w.iter().copied().fold(best, f64::min);
                best
            })
            .collect();
        assert!(window_best.len() > 2);
        assert!(window_best.windows(2).all(|w| w[1] <= w[0]));
    }
}

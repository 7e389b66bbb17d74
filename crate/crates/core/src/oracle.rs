//! Reference solver for small instances, used to verify ADMM and the bounds.
//!
//! This does not share code paths with the ADMM solver. It attacks the
//! problem from both sides:
//!
//! * primal: projected subgradient descent on `||H(g)||_*` over the ball,
//!   from several random starts, finished by a shrinking-step local search;
//! * dual: `||X||_* = max_{||Y|| <= 1} <Y, X>` turns the problem into
//!   `max_{||Y|| <= 1} <H*(Y), g_o> - lambda ||H*(Y)||_2`, a smooth concave
//!   program over the spectral-norm ball solved by accelerated projected
//!   gradient ascent. Every dual iterate also yields the primal point
//!   `g_o - lambda a / ||a||`, `a = H*(Y)`.
//!
//! Any feasible `g` is an upper bound and any `Y` in the ball a lower bound
//! on the optimum, so the returned solution comes with a certified
//! optimality gap. A solve fails when the gap stays above `accept_tol`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hankel::{adjoint, hankel, ImpulseResponse};
use crate::spectral::{nuclear_norm, singular_values};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub seed: u64,
    /// Random starting points for the primal subgradient method.
    pub restarts: usize,
    pub subgradient_iters: usize,
    pub dual_iters: usize,
    /// Stop once `upper - lower <= gap_tol * (1 + upper)`.
    pub gap_tol: f64,
    /// Fail unless `upper - lower <= accept_tol * (1 + upper)`.
    pub accept_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            restarts: 4,
            subgradient_iters: 400,
            dual_iters: 20_000,
            gap_tol: 1e-10,
            accept_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub g: ImpulseResponse,
    /// `||H(g)||_*`, an upper bound on the optimum.
    pub objective: f64,
    /// Certified lower bound on the optimum.
    pub lower_bound: f64,
}

impl OracleSolution {
    pub fn gap(&self) -> f64 {
        (self.objective - self.lower_bound).max(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct OraclePoint {
    pub lambda: f64,
    pub solution: ImpulseResponse,
    pub sigma: DVector<f64>,
    pub objective: f64,
    pub gap: f64,
}

struct Problem<'a> {
    g_o: &'a DVector<f64>,
    lambda: f64,
}

impl Problem<'_> {
    fn project(&self, g: &DVector<f64>) -> DVector<f64> {
        let d = g - self.g_o;
        let norm = d.norm();
        if norm <= self.lambda {
            g.clone()
        } else {
            self.g_o + d * (self.lambda / norm)
        }
    }

    /// Dual value and the primal point it induces.
    fn dual(&self, y: &DMatrix<f64>) -> (f64, DVector<f64>) {
        let a = adjoint(y);
        let a_norm = a.norm();
        let value = a.dot(self.g_o) - self.lambda * a_norm;
        let g = if a_norm > 0.0 { self.g_o - &a * (self.lambda / a_norm) } else { self.g_o.clone() };
        (value, g)
    }
}

/// Clips the eigenvalues of a symmetric matrix to `[-1, 1]`.
fn project_spectral_ball(y: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (y + y.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clipped = eig.eigenvalues.map(|v| v.clamp(-1.0, 1.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

/// A subgradient `U V^T` of the nuclear norm at a symmetric matrix.
fn sign_matrix(x: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(x.clone());
    let scale = eig.eigenvalues.amax();
    let signs = eig.eigenvalues.map(|v| if v.abs() <= 1e-14 * scale { 0.0 } else { v.signum() });
    &eig.eigenvectors * DMatrix::from_diagonal(&signs) * eig.eigenvectors.transpose()
}

struct Best {
    g: DVector<f64>,
    upper: f64,
    lower: f64,
}

impl Best {
    fn offer(&mut self, g: DVector<f64>, value: f64) {
        if value < self.upper {
            self.upper = value;
            self.g = g;
        }
    }

    fn done(&self, tol: f64) -> bool {
        self.upper - self.lower <= tol * (1.0 + self.upper)
    }
}

fn dual_ascent(prob: &Problem, y0: DMatrix<f64>, best: &mut Best, cfg: &OracleConfig) {
    let mut y = project_spectral_ball(&y0);
    let mut y_prev = y.clone();
    let (mut f_y, g) = prob.dual(&y);
    best.lower = best.lower.max(f_y);
    best.offer(g.clone(), nuclear_norm(&hankel(&g)));
    let mut t = 1.0f64;
    let mut lip = 1.0f64;

    for _ in 0..cfg.dual_iters {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let y_bar = &y + (&y - &y_prev) * ((t - 1.0) / t_next);
        let (f_bar, g_bar) = prob.dual(&y_bar);
        let grad = hankel(&g_bar);

        // Backtracking on the quadratic model of the concave dual.
        let (y_new, f_new, g_new) = loop {
            let cand = project_spectral_ball(&(&y_bar + &grad / lip));
            let (f_cand, g_cand) = prob.dual(&cand);
            let step = &cand - &y_bar;
            let model = f_bar + grad.dot(&step) - 0.5 * lip * step.norm_squared();
            if f_cand >= model - 1e-15 * (1.0 + f_bar.abs()) || lip > 1e16 {
                break (cand, f_cand, g_cand);
            }
            lip *= 2.0;
        };

        best.lower = best.lower.max(f_new);
        best.offer(g_new.clone(), nuclear_norm(&hankel(&g_new)));
        if best.done(cfg.gap_tol) {
            return;
        }
        if f_new < f_y {
            // Function-value restart.
            t = 1.0;
            y_prev = y_new.clone();
        } else {
            t = t_next;
            y_prev = std::mem::replace(&mut y, y_new.clone());
        }
        y = y_new;
        f_y = f_new;
        lip *= 0.9;
    }
}

fn subgradient_descent(prob: &Problem, g0: DVector<f64>, best: &mut Best, iters: usize) {
    let mut g = prob.project(&g0);
    for k in 0..iters {
        let h = hankel(&g);
        let value = nuclear_norm(&h);
        best.offer(g.clone(), value);
        let sub = adjoint(&sign_matrix(&h));
        let sub_norm2 = sub.norm_squared();
        if sub_norm2 == 0.0 {
            break;
        }
        // Polyak step against the certified lower bound, with a floor that
        // keeps the iteration moving while the bound is still loose.
        let polyak = (value - best.lower).max(0.0) / sub_norm2;
        let floor = prob.lambda / (10.0 * ((k + 1) as f64).sqrt() * sub_norm2.sqrt());
        let step = polyak.min(floor.max(polyak * 0.5));
        g = prob.project(&(&g - sub * step));
    }
}

fn local_search(prob: &Problem, best: &mut Best, rng: &mut ChaCha8Rng) {
    let n = prob.g_o.len();
    let mut radius = 1e-2 * prob.lambda.max(1e-12);
    while radius > 1e-13 * prob.lambda.max(1e-12) {
        let mut improved = false;
        for _ in 0..4 * n {
            let dir = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let cand = prob.project(&(&best.g + dir.normalize() * radius));
            let value = nuclear_norm(&hankel(&cand));
            if value < best.upper {
                best.offer(cand, value);
                improved = true;
            }
        }
        if !improved {
            radius *= 0.5;
        }
    }
}

fn random_symmetric(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&m + m.transpose()) * 0.5
}

/// Minimizes `||H(g)||_*` over `||g - g_o|| <= lambda` with a certified gap.
pub fn brute_solve(g_o: &ImpulseResponse, lambda: f64, cfg: &OracleConfig) -> Result<OracleSolution> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let n = g_o.len();
    if lambda == 0.0 {
        let objective = nuclear_norm(&g_o.hankel());
        return Ok(OracleSolution { g: g_o.clone(), objective, lower_bound: objective });
    }
    if lambda >= g_o.norm() {
        return Ok(OracleSolution { g: ImpulseResponse::zeros(n)?, objective: 0.0, lower_bound: 0.0 });
    }

    let prob = Problem { g_o: g_o.as_vector(), lambda };
    let p = g_o.order();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ lambda.to_bits());
    let mut best = Best { g: g_o.as_vector().clone(), upper: f64::INFINITY, lower: f64::NEG_INFINITY };

    // Dual from the subgradient at g_o, then from random points of the ball.
    dual_ascent(&prob, sign_matrix(&g_o.hankel()), &mut best, cfg);
    for _ in 0..cfg.restarts {
        if best.done(cfg.gap_tol) {
            break;
        }
        dual_ascent(&prob, random_symmetric(p, &mut rng), &mut best, cfg);
    }

    for _ in 0..cfg.restarts {
        if best.done(cfg.gap_tol) {
            break;
        }
        let start = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let start = prob.g_o + start * (lambda / (n as f64).sqrt());
        subgradient_descent(&prob, start, &mut best, cfg.subgradient_iters);
    }
    if !best.done(cfg.gap_tol) {
        local_search(&prob, &mut best, &mut rng);
    }

    if !best.done(cfg.accept_tol) {
        return Err(Error::Oracle(format!(
            "gap {:e} above tolerance (upper {:e}, lower {:e}, lambda {lambda:e})",
            best.upper - best.lower,
            best.upper,
            best.lower
        )));
    }
    Ok(OracleSolution { g: ImpulseResponse::from_vector(best.g)?, objective: best.upper, lower_bound: best.lower })
}

/// `num_points` uniformly spaced solves on `[0, ||g_o||_2]`, run in parallel.
pub fn dense_path(g_o: &ImpulseResponse, num_points: usize, cfg: &OracleConfig) -> Result<Vec<OraclePoint>> {
    if num_points < 2 {
        return Err(Error::InvalidParameter("dense_path needs at least 2 points".into()));
    }
    let lambda_max = g_o.norm();
    (0..num_points)
        .into_par_iter()
        .map(|i| {
            let lambda = if i + 1 == num_points { lambda_max } else { lambda_max * i as f64 / (num_points - 1) as f64 };
            let sol = brute_solve(g_o, lambda, cfg)?;
            Ok(OraclePoint {
                lambda,
                sigma: singular_values(&sol.g.hankel()),
                objective: sol.objective,
                gap: sol.gap(),
                solution: sol.g,
            })
        })
        .collect()
}

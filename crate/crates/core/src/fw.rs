//! Frank-Wolfe minimization of the duality gap over the free part `W`.
//!
//! The feasible set is `M = {W : U^T W = 0, W V = 0, ||W|| <= 1}`. Every
//! element factors as `W = U_perp D V_perp^T` with `||D|| <= 1`, so the
//! linear minimization oracle reduces to an SVD of `U_perp^T C V_perp`.

use nalgebra::{DMatrix, DVector};

use crate::certify::{defect_for, gap_for, SubgradientCertificate};
use crate::error::Result;
use crate::hankel::{adjoint, hankel, ImpulseResponse};
use crate::spectral::orth_complement;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwConfig {
    /// Number of Frank-Wolfe steps `K`.
    pub max_iters: usize,
    pub objective_trace: bool,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self { max_iters: 100, objective_trace: false }
    }
}

/// Gradient of `d(lambda, W)` with respect to `W`.
#[derive(Debug, Clone)]
pub struct GapGradient {
    pub c: DMatrix<f64>,
    /// `a(W) = 0`: the `lambda ||a||` term is not differentiable and was dropped.
    pub degenerate: bool,
}

/// `C = (lambda / ||a||) H(a) + H(x* - g_o)` at the certificate's current `W`.
pub fn gap_gradient(cert: &SubgradientCertificate, g_o: &ImpulseResponse, lambda: f64) -> GapGradient {
    gradient_at(&cert.a_vec, cert.x_star.as_vector() - g_o.as_vector(), lambda)
}

fn gradient_at(a: &DVector<f64>, neg_err: DVector<f64>, lambda: f64) -> GapGradient {
    let mut c = hankel(&neg_err);
    let a_norm = a.norm();
    let degenerate = a_norm == 0.0;
    if !degenerate {
        c += hankel(a) * (lambda / a_norm);
    }
    GapGradient { c, degenerate }
}

/// Minimizer of `<X, C>` over `M`: `X = -U_perp U_c V_c^T V_perp^T` where
/// `U_c S V_c^T` is the SVD of `U_perp^T C V_perp`.
///
/// The minimum value is `-||U_perp^T C V_perp||_*`. When `U` has full
/// column rank `p` the set is `{0}`.
pub fn lmo(c: &DMatrix<f64>, u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let u_perp = orth_complement(u);
    let v_perp = orth_complement(v);
    lmo_with_bases(c, &u_perp, &v_perp)
}

fn lmo_with_bases(c: &DMatrix<f64>, u_perp: &DMatrix<f64>, v_perp: &DMatrix<f64>) -> DMatrix<f64> {
    let p = c.nrows();
    if u_perp.ncols() == 0 || v_perp.ncols() == 0 {
        return DMatrix::zeros(p, p);
    }
    let reduced = u_perp.transpose() * c * v_perp;
    let (rows, cols) = reduced.shape();
    let svd = reduced.svd(true, true);
    let (uc, vtc) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    // Drop directions with zero singular value: they do not change <X, C>.
    let cut = svd.singular_values.max() * 1e-14;
    let mut d = DMatrix::zeros(rows, cols);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            d -= uc.column(i) * vtc.row(i);
        }
    }
    u_perp * d * v_perp.transpose()
}

#[derive(Debug, Clone)]
pub struct FwResult {
    /// Certificate carrying the best `W` found.
    pub cert: SubgradientCertificate,
    pub initial_gap: f64,
    pub best_gap: f64,
    pub best_iter: usize,
    /// Gap at each iterate `W^1..W^K` when tracing is on.
    pub trace: Vec<f64>,
}

/// Runs `K` Frank-Wolfe steps with `gamma_k = 2 / (2 + k)` starting from
/// the certificate's `W` and returns the best iterate.
pub fn optimize_w(
    cert0: &SubgradientCertificate,
    g_o: &ImpulseResponse,
    lambda: f64,
    cfg: &FwConfig,
) -> Result<FwResult> {
    let err = cert0.error_vector(g_o);
    let neg_err = -&err;
    let u_perp = orth_complement(&cert0.svd.u);
    let v_perp = orth_complement(&cert0.svd.v);
    let a_uvt = adjoint(&cert0.svd.uvt());

    let mut w = cert0.w.clone();
    let mut a = cert0.a_vec.clone();
    let x_star = cert0.x_star.as_vector();
    let gap_at = |a: &DVector<f64>| gap_for(a, &err, lambda, defect_for(a, x_star, cert0.objective_star));
    let initial_gap = gap_at(&a);
    let (mut best_gap, mut best_iter, mut best_w) = (initial_gap, 0, w.clone());
    let mut trace = Vec::new();

    for k in 0..cfg.max_iters {
        let grad = gradient_at(&a, neg_err.clone(), lambda);
        let x = lmo_with_bases(&grad.c, &u_perp, &v_perp);
        let gamma = 2.0 / (2.0 + k as f64);
        w = (1.0 - gamma) * w + gamma * x;
        a = &a_uvt + adjoint(&w);
        let gap = gap_at(&a);
        if cfg.objective_trace {
            trace.push(gap);
        }
        if gap < best_gap {
            best_gap = gap;
            best_iter = k + 1;
            best_w = w.clone();
        }
    }

    let cert = if best_iter == 0 { cert0.clone() } else { cert0.with_w_unchecked(best_w) };
    Ok(FwResult { cert, initial_gap, best_gap, best_iter, trace })
}

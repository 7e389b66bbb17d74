//! Subgradient certificates and the per-interval error bounds.
//!
//! Given a solution `x*` at `lambda*` and any subgradient `G = U V^T + W` of
//! the nuclear norm at `H(x*)`, the vector `a = H*(G)` gives the global
//! lower bound `||H(x)||_* >= ||H(x*)||_* + a^T (x - x*)`. Minimizing the
//! right-hand side over the ball `||x - g_o|| <= lambda` bounds the cost
//! decrease from `lambda*` to `lambda` by
//!
//! ```text
//! d(lambda, W) = lambda ||a||_2 - a^T (g_o - x*)
//! ```
//!
//! The same bound holds for any `G` with `||G||_2 <= 1` once the defect
//! `||H(x*)||_* - a^T x*` is added. For an exact subgradient the defect is
//! zero; it becomes positive when tiny singular values of an inexact solution
//! are cut from `U` and `V`, and adding it keeps the bound valid.
//!
//! The singular-value bound is `min(first, C_A (lambda^2 - lambda*^2))`
//! where `first = ||sigma* - ||H(x*)||_* e_min||^2` does not depend on
//! `lambda`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hankel::{adjoint, hankel, ImpulseResponse};
use crate::spectral::{compact_svd, orth_complement, singular_values, spectral_norm, CompactSvd, DEFAULT_RANK_TOL};

/// Tolerance for `U^T W = 0`, `W V = 0` and `||W|| <= 1`.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SubgradientCertificate {
    pub lambda_star: f64,
    pub x_star: ImpulseResponse,
    pub svd: CompactSvd,
    pub w: DMatrix<f64>,
    /// `H*(U V^T + W)`.
    pub a_vec: DVector<f64>,
    /// `||H(x*)||_*`.
    pub objective_star: f64,
    /// Full singular-value vector of `H(x*)`, length `p`.
    pub sigma_star: DVector<f64>,
}

/// Builds a certificate with the default rank tolerance.
pub fn build_certificate(
    lambda_star: f64,
    x_star: &ImpulseResponse,
    w: Option<&DMatrix<f64>>,
) -> Result<SubgradientCertificate> {
    build_certificate_with_rank_tol(lambda_star, x_star, w, DEFAULT_RANK_TOL)
}

/// Builds a certificate; singular values below `rank_tol * sigma_max` are
/// treated as zero when forming `U` and `V`.
///
/// Note the bounds stay valid for any admissible `W`, including when tied
/// singular values make `U V^T` depend on the SVD routine's choice of basis.
pub fn build_certificate_with_rank_tol(
    lambda_star: f64,
    x_star: &ImpulseResponse,
    w: Option<&DMatrix<f64>>,
    rank_tol: f64,
) -> Result<SubgradientCertificate> {
    if !(lambda_star >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda_star must be >= 0, got {lambda_star}")));
    }
    let h = hankel(x_star.as_vector());
    let p = h.nrows();
    let svd = compact_svd(&h, rank_tol)?;
    let sigma_star = singular_values(&h);
    let objective_star = sigma_star.sum();
    let w = match w {
        Some(w) => {
            check_membership(&svd, w)?;
            w.clone()
        }
        None => DMatrix::zeros(p, p),
    };
    let a_vec = adjoint(&(svd.uvt() + &w));
    Ok(SubgradientCertificate {
        lambda_star,
        x_star: x_star.clone(),
        svd,
        w,
        a_vec,
        objective_star,
        sigma_star,
    })
}

/// Checks `U^T W = 0`, `W V = 0` and `||W||_2 <= 1`, all to [`MEMBERSHIP_TOL`].
pub fn check_membership(svd: &CompactSvd, w: &DMatrix<f64>) -> Result<()> {
    let p = svd.dim();
    if w.shape() != (p, p) {
        return Err(Error::Shape(format!("W must be {p}x{p}, got {:?}", w.shape())));
    }
    let left = (svd.u.transpose() * w).norm();
    if left > MEMBERSHIP_TOL {
        return Err(Error::Membership(format!("||U^T W||_F = {left:e} exceeds {MEMBERSHIP_TOL:e}")));
    }
    let right = (w * &svd.v).norm();
    if right > MEMBERSHIP_TOL {
        return Err(Error::Membership(format!("||W V||_F = {right:e} exceeds {MEMBERSHIP_TOL:e}")));
    }
    let spec = spectral_norm(w);
    if spec > 1.0 + MEMBERSHIP_TOL {
        return Err(Error::Membership(format!("||W||_2 = {spec} exceeds 1")));
    }
    Ok(())
}

impl SubgradientCertificate {
    pub fn order(&self) -> usize {
        self.sigma_star.len()
    }

    /// Same point, different free part `W` (validated).
    pub fn with_w(&self, w: &DMatrix<f64>) -> Result<Self> {
        check_membership(&self.svd, w)?;
        Ok(self.with_w_unchecked(w.clone()))
    }

    pub(crate) fn with_w_unchecked(&self, w: DMatrix<f64>) -> Self {
        let a_vec = adjoint(&(self.svd.uvt() + &w));
        Self { w, a_vec, ..self.clone() }
    }

    /// `g_o - x*`, the residual of the solution.
    pub fn error_vector(&self, g_o: &ImpulseResponse) -> DVector<f64> {
        g_o.as_vector() - self.x_star.as_vector()
    }

    /// `||H(x*)||_* - a^T x*`, zero for an exact subgradient.
    pub fn defect(&self) -> f64 {
        defect_for(&self.a_vec, self.x_star.as_vector(), self.objective_star)
    }

    /// `||sigma* - ||H(x*)||_* e_min||_2^2` with `e_min` at the smallest entry
    /// (lowest index on ties).
    ///
    /// This is the largest distance from `sigma*` to a point of
    /// `{s >= 0, sum(s) <= ||H(x*)||_*}` whenever `p >= 2`. For `p = 1` the
    /// farthest point is `0` instead, so the result is `||sigma*||^2` there.
    pub fn first_sv_bound(&self) -> f64 {
        if self.sigma_star.len() == 1 {
            return self.sigma_star.norm_squared();
        }
        let mut i_min = 0;
        for (i, &s) in self.sigma_star.iter().enumerate() {
            if s < self.sigma_star[i_min] {
                i_min = i;
            }
        }
        let mut shifted = self.sigma_star.clone();
        if !shifted.is_empty() {
            shifted[i_min] -= self.objective_star;
        }
        shifted.norm_squared()
    }
}

/// `lambda ||a|| - a^T (g_o - x*)` plus the defect, clamped at zero.
pub fn duality_gap(cert: &SubgradientCertificate, g_o: &ImpulseResponse, lambda: f64) -> f64 {
    gap_for(&cert.a_vec, &cert.error_vector(g_o), lambda, cert.defect())
}

pub(crate) fn gap_for(a: &DVector<f64>, err: &DVector<f64>, lambda: f64, defect: f64) -> f64 {
    (lambda * a.norm() - a.dot(err) + defect).max(0.0)
}

pub(crate) fn defect_for(a: &DVector<f64>, x_star: &DVector<f64>, objective_star: f64) -> f64 {
    (objective_star - a.dot(x_star)).max(0.0)
}

/// `C_A (lambda^2 - lambda*^2)`: the Mirsky bound combined with the ball bound
/// on `||x* - x_lambda||^2`.
pub fn ball_sv_bound(cert: &SubgradientCertificate, lambda: f64, c_a: f64) -> f64 {
    (c_a * (lambda * lambda - cert.lambda_star * cert.lambda_star)).max(0.0)
}

/// Minimum of the first singular-value bound and the ball bound.
pub fn sv_bound(cert: &SubgradientCertificate, lambda: f64, c_a: f64) -> f64 {
    cert.first_sv_bound().min(ball_sv_bound(cert, lambda, c_a))
}

/// Largest `lambda` with `d(lambda, W) <= eps`, capped at `lambda_max`.
///
/// The result can be `<= lambda_star` when the gap at `lambda_star` already
/// exceeds `eps`; callers treat that as a stall.
pub fn next_lambda_cost(
    cert: &SubgradientCertificate,
    g_o: &ImpulseResponse,
    eps: f64,
    lambda_max: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let a_norm = cert.a_vec.norm();
    if a_norm == 0.0 {
        return Ok(lambda_max);
    }
    let offset = cert.a_vec.dot(&cert.error_vector(g_o)) - cert.defect();
    Ok(((eps + offset) / a_norm).min(lambda_max))
}

/// Next grid point for singular-value certification.
///
/// Returns `lambda_max` once the first bound is already within `eps`;
/// otherwise inverts the ball bound.
pub fn next_lambda_sv(cert: &SubgradientCertificate, eps: f64, c_a: f64, lambda_max: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if cert.first_sv_bound() <= eps {
        return Ok(lambda_max);
    }
    next_lambda_ball(cert, eps, c_a, lambda_max)
}

/// `min(lambda_max, sqrt(lambda*^2 + eps / C_A))`, ignoring the first bound.
pub fn next_lambda_ball(cert: &SubgradientCertificate, eps: f64, c_a: f64, lambda_max: f64) -> Result<f64> {
    if !(eps > 0.0) || !(c_a > 0.0) {
        return Err(Error::InvalidParameter(format!("eps and C_A must be positive, got {eps}, {c_a}")));
    }
    Ok((cert.lambda_star * cert.lambda_star + eps / c_a).sqrt().min(lambda_max))
}

/// A free part `W` recovered from a dual variable.
#[derive(Debug, Clone)]
pub struct RecoveredW {
    pub w: DMatrix<f64>,
    /// Cosine of the angle between `a(W)` and `g_o - x*`; `None` when either is zero.
    pub cosine: Option<f64>,
}

/// Projects `Z - U V^T` onto the admissible set for `W`.
///
/// `Z` should be the dual iterate of a converged ADMM solve at `lambda*`.
/// The projection is `(I - U U^T)(Z - U V^T)(I - V V^T)`, rescaled into the
/// unit spectral ball when needed. The resulting `a(W)` is close to a
/// positive multiple of `g_o - x*` when the solve is accurate.
pub fn recover_w_perp(
    cert: &SubgradientCertificate,
    g_o: &ImpulseResponse,
    z_dual: &DMatrix<f64>,
) -> Result<RecoveredW> {
    let p = cert.order();
    if z_dual.shape() != (p, p) {
        return Err(Error::Shape(format!("Z must be {p}x{p}, got {:?}", z_dual.shape())));
    }
    let err = cert.error_vector(g_o);
    if cert.lambda_star == 0.0 || err.norm() == 0.0 {
        return Ok(RecoveredW { w: DMatrix::zeros(p, p), cosine: None });
    }
    let u = &cert.svd.u;
    let v = &cert.svd.v;
    let u_perp = orth_complement(u);
    let v_perp = orth_complement(v);
    let core = u_perp.transpose() * (z_dual - cert.svd.uvt()) * &v_perp;
    let mut w = &u_perp * core * v_perp.transpose();
    let spec = spectral_norm(&w);
    if spec > 1.0 {
        w /= spec;
    }
    let a = adjoint(&(cert.svd.uvt() + &w));
    let denom = a.norm() * err.norm();
    let cosine = (denom > 0.0).then(|| a.dot(&err) / denom);
    Ok(RecoveredW { w, cosine })
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::hankel::cn_constant;
    use proptest::prelude::*;

    fn odd_vec() -> impl Strategy<Value = Vec<f64>> {
        (0usize..=6).prop_flat_map(|h| prop::collection::vec(-5.0..5.0f64, 2 * h + 1))
    }

    proptest! {
        #[test]
        fn subgradient_vector_norm_bounds(x in odd_vec(), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let x = ImpulseResponse::new(x).unwrap();
            let p = x.order();
            let cert = build_certificate(0.0, &x, None).unwrap();
            prop_assert!(cert.a_vec.norm() <= cn_constant(p) * (1.0 + 1e-12));

            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let u_perp = orth_complement(&cert.svd.u);
            let v_perp = orth_complement(&cert.svd.v);
            if u_perp.ncols() > 0 {
                let d = DMatrix::from_fn(u_perp.ncols(), v_perp.ncols(), |_, _| rng.random_range(-1.0..1.0f64));
                let w = &u_perp * (&d / spectral_norm(&d).max(1e-300)) * v_perp.transpose();
                let general = cert.with_w(&w).unwrap();
                prop_assert!(general.a_vec.norm() <= 2.0 * cn_constant(p) * (1.0 + 1e-12));
            }
        }

        #[test]
        fn bounds_are_monotone_in_lambda(
            (x, e) in odd_vec().prop_flat_map(|x| { let n = x.len(); (Just(x), prop::collection::vec(-5.0..5.0f64, n)) }),
            l0 in 0.0..2.0f64,
            d1 in 0.0..2.0f64,
            d2 in 0.0..2.0f64,
        ) {
            let g_o = ImpulseResponse::new(x.iter().zip(&e).map(|(a, b)| a + 0.2 * b).collect()).unwrap();
            let x = ImpulseResponse::new(x).unwrap();
            let cert = build_certificate(l0, &x, None).unwrap();
            let c_a = x.len() as f64;
            let (l1, l2) = (l0 + d1.min(d2), l0 + d1.max(d2));
            prop_assert!(duality_gap(&cert, &g_o, l1) <= duality_gap(&cert, &g_o, l2));
            prop_assert!(sv_bound(&cert, l1, c_a) <= sv_bound(&cert, l2, c_a));
            prop_assert_eq!(sv_bound(&cert, l0, c_a), 0.0);
            // Away from the clamp the gap is affine with slope ||a||.
            let raw = |l: f64| l * cert.a_vec.norm() - cert.a_vec.dot(&cert.error_vector(&g_o));
            if raw(l1) > 0.0 {
                let slope = (duality_gap(&cert, &g_o, l2) - duality_gap(&cert, &g_o, l1)) / (l2 - l1).max(1e-300);
                prop_assert!(l2 - l1 < 1e-9 || (slope - cert.a_vec.norm()).abs() <= 1e-8 * (1.0 + slope));
            }
        }
    }

    #[test]
    fn recovered_w_aligns_with_the_error() {
        let g_o = ImpulseResponse::new(vec![0.9, -0.3, 0.5, 0.2, -0.4]).unwrap();
        let lambda = 0.45;
        let cfg = crate::admm::AdmmConfig { eps_abs: 1e-11, eps_rel: 1e-11, max_iters: 500_000, ..Default::default() };
        let r = crate::admm::solve(&g_o, lambda, &cfg).unwrap();
        let cert = build_certificate_with_rank_tol(lambda, &r.g_opt, None, 1e-6).unwrap();
        let rec = recover_w_perp(&cert, &g_o, &r.dual).unwrap();
        check_membership(&cert.svd, &rec.w).unwrap();
        let angle = rec.cosine.unwrap().clamp(-1.0, 1.0).acos().to_degrees();
        assert!(angle <= 5.0, "angle {angle}");
        let with_w = cert.with_w(&rec.w).unwrap();
        assert!(duality_gap(&with_w, &g_o, lambda) <= 1e-6);
    }

    #[test]
    fn dual_equal_to_uvt_recovers_zero() {
        let x = ImpulseResponse::new(vec![1.0, 0.5, 0.25]).unwrap();
        let g_o = ImpulseResponse::new(vec![1.2, 0.5, 0.25]).unwrap();
        let cert = build_certificate(0.2, &x, None).unwrap();
        let rec = recover_w_perp(&cert, &g_o, &cert.svd.uvt()).unwrap();
        assert!(rec.w.norm() < 1e-14);
    }

    #[test]
    fn first_bound_for_a_single_sample() {
        // n = 1: the value can fall from 2 to 0, which ||sigma*||^2 covers.
        let cert = build_certificate(0.0, &ImpulseResponse::new(vec![2.0]).unwrap(), None).unwrap();
        assert_eq!(cert.first_sv_bound(), 4.0);
    }
}

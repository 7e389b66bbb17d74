//! Dense spectral primitives built on nalgebra's SVD.
//!
//! Singular-value vectors are always full length (zero-padded past the
//! numerical rank) and sorted nonincreasing.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Relative rank cut used by [`compact_svd`] unless told otherwise.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const SVD_MAX_ITERS: usize = 10_000;

/// `X = U diag(s) V^T` restricted to the numerically nonzero part.
#[derive(Debug, Clone)]
pub struct CompactSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl CompactSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// `U V^T`, the smooth part of every subgradient of the nuclear norm at `X`.
    pub fn uvt(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (mut col, s) in us.column_iter_mut().zip(self.s.iter()) {
            col *= *s;
        }
        us * self.v.transpose()
    }
}

fn full_svd(x: &DMatrix<f64>, vectors: bool) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(x.clone(), vectors, vectors, f64::EPSILON, SVD_MAX_ITERS).ok_or_else(|| {
        Error::Numerical(format!(
            "SVD did not converge within {SVD_MAX_ITERS} iterations ({}x{}, ||X||_F = {:e})",
            x.nrows(),
            x.ncols(),
            x.norm()
        ))
    })
}

/// Compact SVD, discarding singular values below `rank_tol * sigma_max`.
pub fn compact_svd(x: &DMatrix<f64>, rank_tol: f64) -> Result<CompactSvd> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("compact_svd: matrix has non-finite entries".into()));
    }
    let (rows, cols) = x.shape();
    let svd = full_svd(x, true)?;
    let s = svd.singular_values;
    let sigma_max = s.iter().copied().fold(0.0, f64::max);
    let rank = if sigma_max == 0.0 {
        0
    } else {
        let cut = rank_tol * sigma_max;
        s.iter().take_while(|&&v| v > cut).count()
    };
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v requested");
    Ok(CompactSvd {
        u: if rank == 0 { DMatrix::zeros(rows, 0) } else { u.columns(0, rank).into_owned() },
        s: s.rows(0, rank).into_owned(),
        v: if rank == 0 { DMatrix::zeros(cols, 0) } else { v_t.rows(0, rank).transpose() },
    })
}

/// All `min(rows, cols)` singular values, nonincreasing.
pub fn singular_values(x: &DMatrix<f64>) -> DVector<f64> {
    let mut s: Vec<f64> = x.singular_values_unordered().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(s)
}

pub fn nuclear_norm(x: &DMatrix<f64>) -> f64 {
    x.singular_values_unordered().sum()
}

pub fn spectral_norm(x: &DMatrix<f64>) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.singular_values_unordered().iter().copied().fold(0.0, f64::max)
}

/// Singular-value soft-thresholding: the proximal map of `tau * ||.||_*`.
pub fn svt(x: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    debug_assert!(tau >= 0.0);
    let svd = x.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v requested");
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let shrunk = s - tau;
        if shrunk > 0.0 {
            out += shrunk * u.column(i) * v_t.row(i);
        }
    }
    out
}

/// `sum_i (sigma_i(X) - sigma_i(Y))^2` over the full sorted spectra.
pub fn sv_distance_sq(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::Shape(format!(
            "sv_distance_sq: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    Ok(sv_vector_distance_sq(&singular_values(x), &singular_values(y)))
}

/// Squared distance between two singular-value vectors, zero-padding the shorter.
pub fn sv_vector_distance_sq(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let len = a.len().max(b.len());
    (0..len)
        .map(|i| {
            let d = a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0);
            d * d
        })
        .sum()
}

/// Orthonormal basis of the orthogonal complement of `range(U)`.
///
/// `U` must have orthonormal columns. The basis is only defined up to an
/// orthogonal change of coordinates.
pub fn orth_complement(u: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, r) = u.shape();
    if r == 0 {
        return DMatrix::identity(p, p);
    }
    if r >= p {
        return DMatrix::zeros(p, 0);
    }
    // Eigenvalues of I - U U^T are 1 (complement) and 0 (range of U).
    let proj = DMatrix::identity(p, p) - u * u.transpose();
    let eig = SymmetricEigen::new(proj);
    let mut keep: Vec<usize> = (0..p).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    keep.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    keep.truncate(p - r);
    let mut out = DMatrix::zeros(p, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &eig.eigenvectors.column(i));
    }
    out
}

/// Frobenius inner product `<A, B> = tr(B^T A)`.
pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn square(max_p: usize) -> impl Strategy<Value = DMatrix<f64>> {
        (1..=max_p).prop_flat_map(|p| {
            prop::collection::vec(-5.0..5.0f64, p * p).prop_map(move |x| DMatrix::from_vec(p, p, x))
        })
    }

    fn pair(max_p: usize) -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
        (1..=max_p).prop_flat_map(|p| {
            let m = move || prop::collection::vec(-5.0..5.0f64, p * p).prop_map(move |x| DMatrix::from_vec(p, p, x));
            (m(), m())
        })
    }

    fn orthogonal(x: &DMatrix<f64>) -> DMatrix<f64> {
        x.clone().qr().q()
    }

    proptest! {
        #[test]
        fn nuclear_norm_is_sum_of_compact_values(x in square(8)) {
            let svd = compact_svd(&x, DEFAULT_RANK_TOL).unwrap();
            prop_assert!((nuclear_norm(&x) - svd.s.sum()).abs() <= 1e-10 * (1.0 + svd.s.sum()));
        }

        #[test]
        fn compact_svd_reconstructs((x, _) in pair(8)) {
            let svd = compact_svd(&x, DEFAULT_RANK_TOL).unwrap();
            let r = svd.rank();
            prop_assert!((svd.u.transpose() * &svd.u - DMatrix::identity(r, r)).norm() < 1e-10);
            prop_assert!((svd.v.transpose() * &svd.v - DMatrix::identity(r, r)).norm() < 1e-10);
            prop_assert!((svd.reconstruct() - &x).norm() <= 1e-10 * x.norm().max(1e-300));
            prop_assert!(svd.s.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn unitary_invariance((x, y) in pair(8), z in square(1)) {
            let p = x.nrows();
            let q = orthogonal(&y);
            let w = orthogonal(&(DMatrix::from_fn(p, p, |i, j| ((i * 3 + j) as f64 + z[(0, 0)]).cos())));
            let lhs = nuclear_norm(&(&q * &x * &w));
            prop_assert!((lhs - nuclear_norm(&x)).abs() <= 1e-10 * (1.0 + lhs));
        }

        #[test]
        fn dual_characterization((x, y) in pair(8)) {
            let spec = spectral_norm(&y);
            prop_assume!(spec > 0.0);
            let y = y / spec;
            let nuc = nuclear_norm(&x);
            prop_assert!(inner(&y, &x) <= nuc + 1e-10 * (1.0 + nuc));
            let svd = compact_svd(&x, DEFAULT_RANK_TOL).unwrap();
            prop_assert!((inner(&svd.uvt(), &x) - nuc).abs() <= 1e-10 * (1.0 + nuc));
        }

        #[test]
        fn mirsky((x, y) in pair(20)) {
            let d = sv_distance_sq(&x, &y).unwrap();
            prop_assert!(d <= (&x - &y).norm_squared() * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn svt_shrinks_every_value(x in square(6), tau in 0.0..4.0f64) {
            let before = singular_values(&x);
            let after = singular_values(&svt(&x, tau));
            for (b, a) in before.iter().zip(after.iter()) {
                prop_assert!((a - (b - tau).max(0.0)).abs() <= 1e-10 * (1.0 + b));
            }
        }
    }

    /// `tau ||H||_* + ||H - X||_F^2 / 2` for 2x2 `H`, using
    /// `(s1 + s2)^2 = ||H||_F^2 + 2 |det H|`.
    fn prox_objective(h: [f64; 4], x: &DMatrix<f64>, tau: f64) -> f64 {
        let fro2: f64 = h.iter().map(|v| v * v).sum();
        let det = h[0] * h[3] - h[1] * h[2];
        let nuc = (fro2 + 2.0 * det.abs()).sqrt();
        let dist2 = (h[0] - x[(0, 0)]).powi(2)
            + (h[1] - x[(0, 1)]).powi(2)
            + (h[2] - x[(1, 0)]).powi(2)
            + (h[3] - x[(1, 1)]).powi(2);
        tau * nuc + 0.5 * dist2
    }

    fn grid_minimum(x: &DMatrix<f64>, tau: f64) -> f64 {
        let mut center = [x[(0, 0)], x[(0, 1)], x[(1, 0)], x[(1, 1)]];
        let mut half = x.amax().max(1.0);
        let mut best = f64::INFINITY;
        const K: i32 = 12;
        for _ in 0..8 {
            let step = half / K as f64;
            let mut arg = center;
            for a in -K..=K {
                for b in -K..=K {
                    for c in -K..=K {
                        for d in -K..=K {
                            let h = [
                                center[0] + a as f64 * step,
                                center[1] + b as f64 * step,
                                center[2] + c as f64 * step,
                                center[3] + d as f64 * step,
                            ];
                            let v = prox_objective(h, x, tau);
                            if v < best {
                                best = v;
                                arg = h;
                            }
                        }
                    }
                }
            }
            center = arg;
            half = 3.0 * step;
        }
        best
    }

    #[test]
    fn svt_is_the_prox_on_two_by_two_grids() {
        let cases = [
            (DMatrix::from_row_slice(2, 2, &[1.5, -0.3, 0.7, 0.2]), 0.4),
            (DMatrix::from_row_slice(2, 2, &[0.1, 2.0, -1.0, 0.5]), 1.2),
            (DMatrix::from_row_slice(2, 2, &[-0.8, 0.0, 0.0, 0.3]), 0.5),
        ];
        for (x, tau) in cases {
            let s = svt(&x, tau);
            let at_svt = prox_objective([s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]], &x, tau);
            let grid = grid_minimum(&x, tau);
            assert!(at_svt <= grid + 1e-12, "svt {at_svt} worse than grid {grid}");
            assert!(grid - at_svt <= 1e-3);
        }
    }
}

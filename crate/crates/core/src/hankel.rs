//! The symmetric Hankel map `g -> H(g)` and its adjoint.
//!
//! A vector of odd length `n = 2p - 1` fills a `p x p` matrix with
//! `H[i][j] = g[i + j]` (0-based). In 1-based notation the adjoint sums
//! anti-diagonals, `x_k = sum_{i + j = k + 1} X_ij`; with 0-based indices
//! this becomes `x_k = sum_{i + j = k} X_ij`.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FIR impulse-response coefficients. Always odd length and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse(DVector<f64>);

impl ImpulseResponse {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(coeffs))
    }

    pub fn from_vector(coeffs: DVector<f64>) -> Result<Self> {
        let n = coeffs.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        if n.is_multiple_of(2) {
            return Err(Error::EvenLength(n));
        }
        if let Some((index, &value)) = coeffs.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self(coeffs))
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::from_vector(DVector::zeros(n))
    }

    /// Number of coefficients `n`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Side length `p = (n + 1) / 2` of the Hankel matrix.
    pub fn order(&self) -> usize {
        self.0.len().div_ceil(2)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn hankel(&self) -> HankelMatrix {
        HankelMatrix(hankel(&self.0))
    }
}

impl Deref for ImpulseResponse {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// A square matrix whose entries depend only on `i + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix(DMatrix<f64>);

impl HankelMatrix {
    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl Deref for HankelMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Builds `H(g)`. Fails on even or zero length.
pub fn hankel_map(g: &DVector<f64>) -> Result<HankelMatrix> {
    let n = g.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    if n.is_multiple_of(2) {
        return Err(Error::EvenLength(n));
    }
    Ok(HankelMatrix(hankel(g)))
}

/// Unchecked `H(g)`; callers guarantee odd length.
pub(crate) fn hankel(g: &DVector<f64>) -> DMatrix<f64> {
    debug_assert!(g.len() % 2 == 1);
    let p = g.len().div_ceil(2);
    DMatrix::from_fn(p, p, |i, j| g[i + j])
}

/// `H*(X)`: sums the anti-diagonals of a square matrix.
pub fn hankel_adjoint(x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if !x.is_square() {
        return Err(Error::Shape(format!(
            "adjoint needs a square matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Empty);
    }
    Ok(adjoint(x))
}

pub(crate) fn adjoint(x: &DMatrix<f64>) -> DVector<f64> {
    let p = x.nrows();
    let mut out = DVector::zeros(2 * p - 1);
    for j in 0..p {
        for i in 0..p {
            out[i + j] += x[(i, j)];
        }
    }
    out
}

/// Anti-diagonal lengths `(1, 2, ..., p, ..., 2, 1)`; the diagonal of `H* H`.
pub fn multiplicities(p: usize) -> DVector<f64> {
    DVector::from_fn(2 * p - 1, |k, _| (k.min(2 * p - 2 - k) + 1) as f64)
}

/// `c_n = (2 sum_{k=1}^{p-1} k^2 + p^2)^{1/2}`, equal to `||H*(ones(p, p))||_2`.
pub fn cn_constant(p: usize) -> f64 {
    let p = p as f64;
    // sum_{k=1}^{p-1} k^2 = (p-1) p (2p-1) / 6
    let tail = (p - 1.0) * p * (2.0 * p - 1.0) / 6.0;
    (2.0 * tail + p * p).sqrt()
}

/// Which constant to use for `||H(x)||_F^2 <= C_A ||x||_2^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaMode {
    /// `C_A = n`.
    #[default]
    Full,
    /// `C_A = p`, the largest anti-diagonal multiplicity.
    Tight,
}

pub fn frobenius_constant(n: usize, mode: CaMode) -> f64 {
    match mode {
        CaMode::Full => n as f64,
        CaMode::Tight => n.div_ceil(2) as f64,
    }
}

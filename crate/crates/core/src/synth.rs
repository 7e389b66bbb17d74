//! Synthetic impulse responses from first-order modes.

use crate::error::{Error, Result};
use crate::hankel::ImpulseResponse;

/// One first-order mode: contributes `amplitude * pole^(k-1)` to `g_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub amplitude: f64,
    pub pole: f64,
}

/// `g_k = sum_j c_j a_j^(k-1)`, `k = 1..n`.
///
/// The Hankel matrix of the result has rank at most the number of distinct
/// poles, which makes these handy test systems.
pub fn synthesize(modes: &[Mode], n: usize) -> Result<ImpulseResponse> {
    if n.is_multiple_of(2) {
        return Err(Error::EvenLength(n));
    }
    for m in modes {
        if !(m.pole.abs() < 1.0) || !m.amplitude.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mode ({}, {}) is not stable: |pole| must be < 1",
                m.amplitude, m.pole
            )));
        }
    }
    let coeffs = (0..n)
        .map(|k| modes.iter().map(|m| m.amplitude * m.pole.powi(k as i32)).sum())
        .collect();
    ImpulseResponse::new(coeffs)
}

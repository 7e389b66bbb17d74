//! Certified approximate regularization paths for Hankel nuclear-norm
//! minimization:
//!
//! ```text
//! minimize ||H(g)||_*  subject to  ||g - g_o||_2 <= lambda
//! ```
//!
//! The path over `lambda in [0, ||g_o||_2]` is approximated by solving at a
//! sparse, adaptively chosen set of grid points. Between grid points the
//! previous solution is reused, with a guaranteed bound on either the cost
//! error or the squared singular-value error.
//!
//! * [`hankel`]: the map, its adjoint and structural constants.
//! * [`spectral`]: SVD helpers, nuclear norm, singular-value thresholding.
//! * [`admm`]: the solver for a single `lambda`.
//! * [`certify`]: subgradient certificates and the two error bounds.
//! * [`fw`]: Frank-Wolfe tightening of the duality gap.
//! * [`path`]: the gridding algorithms and a-priori grid counts.
//! * [`oracle`]: an independent reference solver for small instances.

pub mod admm;
pub mod certify;
mod error;
pub mod fw;
pub mod hankel;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod path;
pub mod spectral;
pub mod synth;

pub use admm::{AdmmConfig, AdmmReport, AdmmSolver};
pub use certify::SubgradientCertificate;
pub use error::{Error, Result};
pub use fw::FwConfig;
pub use hankel::{CaMode, HankelMatrix, ImpulseResponse};
pub use path::{Algorithm, PathResult, ToleranceSpec, WMode};
pub use spectral::CompactSvd;

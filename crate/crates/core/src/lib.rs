//! Numerical laboratory for perturbative flow-equation renormalization of
//! massive φ⁴ theory on constant-curvature Riemannian model manifolds.
//!
//! * [`geometry`] — model manifolds, geodesics, σ bi-tensor, covariant Taylor expansion.
//! * [`heatkernel`] — heat kernels, propagators, completeness/semigroup checks and bound certification.
//! * [`trees`] — tree classes, reductions and weight factors.
//! * [`flow`] — tree-level and one-loop flow equations, relevant terms, envelopes and ε-limits.
//! * [`scaling`] — constant conformal rescaling and the constant-curvature decomposition.
//! * [`quad`] — adaptive and fixed quadrature, Chebyshev interpolation, small linear algebra.
//! * [`mc`] — seeded, sharded Monte-Carlo estimation.
//! * [`record`] — verification records (JSON and fixed-column CSV).

pub mod error;
pub mod flow;
pub mod geometry;
pub mod heatkernel;
pub mod mc;
pub mod quad;
pub mod record;
pub mod scaling;
pub mod trees;

pub use error::{Error, Result};

//! Error type shared by every module of the library.

use thiserror::Error;

/// Failures raised by geometric, kernel, tree and flow operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A point violates the embedding constraint of its manifold.
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    /// A geodesic request touches the cut locus (antipodal region of a sphere).
    #[error("cut-locus ambiguity: {0}")]
    CutLocus(String),
    /// An argument is outside the domain of the operation (t ≤ 0, radius past injectivity, …).
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent or out-of-range parameters.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// A series or quadrature did not reach the requested accuracy.
    #[error("convergence error: {message} (achieved error {achieved:e})")]
    Convergence { message: String, achieved: f64 },
    /// The requested quantity diverges (e.g. m² = 0 with t = ∞).
    #[error("divergence: {0}")]
    Divergence(String),
    /// The enumeration size guard refused a request.
    #[error("size guard: {0}")]
    SizeGuard(String),
    /// Combination of inputs the engine does not implement.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Precondition of a verification identity is not met.
    #[error("precondition: {0}")]
    Precondition(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

//! Error type shared by every stage of the pipeline.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the demodulation pipeline.
///
/// Variants are grouped by how a caller should react: `Invalid` means the
/// request itself is malformed, the `Degenerate*`/`Singular*`/`NoQuadrature*`
/// family means the data cannot support a quadrature pair, and `Io`/`Format`
/// are storage problems.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed request: bad dimensions, mismatched lengths, out-of-range
    /// parameters, unknown configuration keys.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The second principal component carries no usable energy, so no
    /// quadrature pair exists (all frames equal, or all steps equal mod 2pi).
    #[error("degenerate second component (lambda1/lambda0 = {ratio:.3e})")]
    DegenerateSecondComponent { ratio: f64 },

    /// The real channel of the analytic signal sums to zero, so the
    /// correction ratio is undefined.
    #[error("degenerate real axis: sum |Re A| = 0")]
    DegenerateRealAxis,

    /// Every pixel of the analytic field is exactly zero.
    #[error("all-zero analytic field")]
    AllZeroField,

    /// The filter has no response at the fringe frequency.
    #[error("no quadrature response: |H(1)| = 0")]
    NoQuadratureResponse,

    /// The least-squares normal matrix is numerically singular.
    #[error("singular normal matrix (condition number {cond:.3e})")]
    SingularNormalMatrix { cond: f64 },

    /// The eigensolver failed to reduce the off-diagonal norm in time.
    #[error("eigensolver did not converge after {sweeps} sweeps")]
    EigNoConvergence { sweeps: usize },

    /// A matrix handed to the eigensolver is not symmetric.
    #[error("matrix is not symmetric (max asymmetry {max_asym:.3e})")]
    NotSymmetric { max_asym: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A stored file is structurally broken: bad magic, truncated payload,
    /// size mismatch, or checksum failure.
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for errors caused by degenerate data rather than a malformed
    /// request; the CLI maps these to a dedicated exit code.
    pub fn is_degenerate_data(&self) -> bool {
        matches!(
            self,
            Error::DegenerateSecondComponent { .. }
                | Error::DegenerateRealAxis
                | Error::AllZeroField
                | Error::NoQuadratureResponse
                | Error::SingularNormalMatrix { .. }
                | Error::EigNoConvergence { .. }
        )
    }
}

use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Malformed or inconsistent input.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A quadrature or root-finder did not reach its tolerance.
    #[error("convergence failure: {0}")]
    Convergence(String),
    /// A least-squares or linear solve was not accurate enough.
    #[error("construction error: {0}")]
    Construction(String),
    /// Singular configuration (coincident vortices, zero constant term, ...).
    #[error("singularity: {0}")]
    Singular(String),
    /// The step size collapsed during time integration.
    #[error("stiffness: {0}")]
    Stiffness(String),
    /// A combinatorial enumeration would be too large.
    #[error("size limit: {0}")]
    Size(String),
    /// A conserved or invariant quantity drifted beyond tolerance.
    #[error("conservation violation: {0}")]
    Conservation(String),
    /// Requested capability is not available for this configuration.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn argument<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}

use thiserror::Error;

/// Unified error type for mechanism, attack, and audit operations.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// A uniform draw hit a grid endpoint whose transform is infinite.
    #[error("sample saturated a uniform grid endpoint")]
    SaturatedSample,
    /// An operation's documented precondition does not hold.
    #[error("precondition violated: {0}")]
    PreconditionViolation(&'static str),
    /// A categorical input lies outside the configured domain.
    #[error("input out of domain: {0}")]
    OutOfDomain(&'static str),
    /// A numeric input is NaN or infinite.
    #[error("non-finite input")]
    NonFiniteInput,
    /// A secret-share payload does not fit the additive field.
    #[error("payload out of field: {0}")]
    PayloadOutOfField(&'static str),
    /// Vector lengths disagree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    /// The audit's secret bit vector came out constant twice in a row.
    #[error("secret split degenerate after one resample")]
    DegenerateSplit,
    /// No epsilon within the search range expresses the requested delta.
    #[error("curve cannot reach the requested delta within the epsilon search range")]
    Unbounded,
    /// A configuration parameter fails validation.
    #[error("bad parameter: {0}")]
    BadParam(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

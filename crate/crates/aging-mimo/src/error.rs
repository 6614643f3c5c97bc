use thiserror::Error;

/// Unified error type for the toolkit.
///
/// The variant name doubles as a stable, machine-readable failure class: the
/// CLI prints it as the first token on stderr and maps configuration problems
/// to exit code 2 and numerical failures to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix that must be positive semidefinite has a significantly
    /// negative eigenvalue (e.g. a non-stationary `(A, C)` pair).
    #[error("NotPsd: {0}")]
    NotPsd(String),

    /// The stacked two-observation covariance block could not be inverted,
    /// even through the pseudo-inverse limit path.
    #[error("SingularBlock: {0}")]
    SingularBlock(String),

    /// A linear solve failed or left a residual above tolerance.
    #[error("SolveFailure: {0}")]
    SolveFailure(String),

    /// Fixed-point iteration did not reach the target residual within the
    /// iteration budget.
    #[error("NoConvergence: {0}")]
    NoConvergence(String),

    /// The pilot-power quartic has no real root inside the feasible interval.
    #[error("NoInteriorRoot: {0}")]
    NoInteriorRoot(String),

    /// A Stieltjes-transform evaluation point lies on (or too close to) a
    /// spectral sample.
    #[error("PoleProximity: {0}")]
    PoleProximity(String),

    /// An MRC channel proxy is the zero vector and cannot be normalized.
    #[error("ZeroVector: {0}")]
    ZeroVector(String),

    /// Operand dimensions do not conform.
    #[error("Dimension: {0}")]
    Dimension(String),

    /// A function argument lies outside its mathematical domain.
    #[error("OutOfDomain: {0}")]
    OutOfDomain(String),

    /// Invalid scenario, configuration file, or parameter combination.
    #[error("Config: {0}")]
    Config(String),

    /// Requested figure preset does not exist.
    #[error("UnknownPreset: {0}")]
    UnknownPreset(String),

    /// The requested pilot power violates the total power budget.
    #[error("InfeasibleBudget: {0}")]
    InfeasibleBudget(String),

    /// Underlying I/O failure.
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable name of the failure class (the token before the colon in the
    /// `Display` output).
    pub fn name(&self) -> &'static str {
        match self {
            Error::NotPsd(_) => "NotPsd",
            Error::SingularBlock(_) => "SingularBlock",
            Error::SolveFailure(_) => "SolveFailure",
            Error::NoConvergence(_) => "NoConvergence",
            Error::NoInteriorRoot(_) => "NoInteriorRoot",
            Error::PoleProximity(_) => "PoleProximity",
            Error::ZeroVector(_) => "ZeroVector",
            Error::Dimension(_) => "Dimension",
            Error::OutOfDomain(_) => "OutOfDomain",
            Error::Config(_) => "Config",
            Error::UnknownPreset(_) => "UnknownPreset",
            Error::InfeasibleBudget(_) => "InfeasibleBudget",
            Error::Io(_) => "Io",
        }
    }

    /// True when the error reflects bad user input rather than a numerical
    /// failure; the CLI maps these to exit code 2.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::UnknownPreset(_) | Error::InfeasibleBudget(_)
        )
    }
}

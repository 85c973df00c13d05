use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("lambda = {lambda} is outside the finite domain ({lo}, {hi}) of the cumulant")]
    Domain { lambda: f64, lo: f64, hi: f64 },

    #[error("no positive Cramér root: {0}")]
    NoCramerRoot(String),

    #[error("target drift {target} is outside the range of psi' (supremum {sup})")]
    DriftOutOfRange { target: f64, sup: f64 },

    #[error("event cap of {cap} exceeded while simulating a Lévy path")]
    EventCapExceeded { cap: u64 },

    #[error("budget cap of {cap} events exceeded before the path left the interval")]
    BudgetCapExceeded { cap: u64 },

    #[error("per-particle walk budget floor({budget}) is zero")]
    DegenerateBudget { budget: f64 },

    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),

    #[error("all {0} Fleming-Viot particles were absorbed in the same step")]
    Extinction(usize),

    #[error("dynamic programming table of {cells} cells exceeds the cap of {cap}")]
    Size { cells: u64, cap: u64 },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("adaptive quadrature did not reach tolerance {tol:e} (estimated error {estimate:e})")]
    ToleranceNotMet { tol: f64, estimate: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

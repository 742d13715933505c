use thiserror::Error;

/// Errors raised by the solvers and risk routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The configuration is invalid or unsupported for the requested solver.
    #[error("configuration error: {0}")]
    Config(String),

    /// No admissible control satisfies the risk constraint.
    #[error("infeasible risk constraint at t = {t}, x = {x}: {detail}")]
    Infeasible { t: f64, x: f64, detail: String },

    /// A solver diagnostic tripped (non-monotone iteration, non-interval feasible set, ...).
    #[error("numerical diagnostic: {0}")]
    Numerical(String),

    /// A policy produced a non-finite control during simulation.
    #[error("non-finite control ({pi}, {c}) at t = {t}, x = {x}")]
    NonFiniteControl { t: f64, x: f64, pi: f64, c: f64 },

    /// The wealth grid does not cover the reachable wealth range.
    #[error("wealth grid too narrow: {0}")]
    GridDomain(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn infeasible(t: f64, x: f64, detail: impl Into<String>) -> Self {
        Error::Infeasible {
            t,
            x,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

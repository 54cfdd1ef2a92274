//! Crate-wide error type.

/// Errors produced by model construction, numerics, and simulation.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A denominator crossed zero where the theory requires positivity.
    #[error("singularity: {what} vanishes at t = {t:.12}")]
    Singularity { t: f64, what: String },

    /// A requested value lies outside the attainable range (e.g. price
    /// inversion past the range of a bounded payoff).
    #[error("range error: {0}")]
    Range(String),

    /// Non-finite intermediate state or overflow.
    #[error("numeric error{}: {what}", node.map(|k| format!(" at node {k}")).unwrap_or_default())]
    Numeric { what: String, node: Option<usize> },

    /// A construction rule could not be satisfied (weights not increasing,
    /// degenerate partition, ...).
    #[error("construction error: {0}")]
    Construction(String),

    /// Malformed or inconsistent scenario configuration.
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric { what: msg.into(), node: None }
    }

    pub fn numeric_at(node: usize, msg: impl Into<String>) -> Self {
        Error::Numeric { what: msg.into(), node: Some(node) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

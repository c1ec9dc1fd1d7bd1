use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed tree text.
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    /// A configured budget (enumeration cap, support size) would be exceeded.
    #[error("resource limit: {0}")]
    Resource(String),

    /// A transport problem whose maximum flow does not saturate the marginals.
    #[error("transport infeasible at size {k}: flow {flow} < required {required}")]
    Infeasible {
        k: usize,
        flow: String,
        required: String,
    },

    /// A tree that was expected among the enumerated shapes of a given size.
    #[error("tree {0} is not an enumerated shape of the expected size")]
    UnknownShape(String),

    /// A statistical test with too few cells to have any degrees of freedom.
    #[error("degenerate chi-square test: {0} cell(s) after merging")]
    DegenerateTest(usize),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

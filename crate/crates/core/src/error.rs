use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Variants are grouped by the layer that produces them; the CLI maps every
/// variant to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    /// The game or strategy document is not well-formed JSON or misses a field.
    #[error("syntax error at line {line}, column {column} (field `{path}`): {message}")]
    Syntax {
        line: usize,
        column: usize,
        path: String,
        message: String,
    },

    /// The document is well-formed but violates a game invariant.
    #[error("invalid game: {0}")]
    Semantic(String),

    #[error("invalid rational literal `{0}`")]
    BadRational(String),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("unknown state `{0}`")]
    UnknownState(String),

    #[error("unknown action `{action}` at state `{state}`")]
    UnknownAction { state: String, action: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The fixed-profile linear system has no unique solution; the induced
    /// chain is not unichain.
    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("iteration cap of {cap} exceeded in {what}")]
    IterationCap { what: &'static str, cap: u64 },

    #[error("node budget of {budget} exhausted in q-rounded search (q = {q}, rows = {rows})")]
    NodeBudget { budget: u64, q: u64, rows: usize },

    #[error("inconsistent oracle: claimed a >= {accepted} but a < {rejected}")]
    InconsistentOracle { accepted: String, rejected: String },

    #[error("invalid skew-symmetry witness: {0}")]
    InvalidWitness(String),

    #[error("not a simple stochastic game: {0}")]
    NotSsg(String),

    #[error("game class precondition failed: {0}")]
    Classification(String),

    #[error("ETR: {0}")]
    Etr(String),

    #[error("missing variable `{0}` in assignment")]
    MissingVariable(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}: parse error at line {line}, column {column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("shape mismatch in `{field}`: expected {expected} values, found {found}")]
    Shape {
        field: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid has no traversable cells")]
    EmptyGraph,

    #[error("no path between {start:?} and {goal:?}")]
    NoPath {
        start: (usize, usize),
        goal: (usize, usize),
    },

    #[error("time budget {budget_s:.3} s is below the minimum achievable time {t_min_s:.3} s")]
    InfeasibleBudget { budget_s: f64, t_min_s: f64 },

    #[error("solver stopped ({reason}) before finding any feasible path")]
    ResourceExhausted { reason: String },

    #[error("instance has {nodes} nodes, above the enumeration limit of {limit}")]
    OracleTooLarge { nodes: usize, limit: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn shape(field: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::Shape {
            field: field.into(),
            expected,
            found,
        }
    }

    pub(crate) fn from_json(source_name: &str, err: serde_json::Error) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    /// True for errors caused by bad user input rather than by the search.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Shape { .. }
                | Error::Validation { .. }
                | Error::Domain(_)
                | Error::OracleTooLarge { .. }
        )
    }
}

use std::path::PathBuf;

use crate::sic::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: &'static str, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("zero-norm channel vector")]
    ZeroNorm,

    #[error("invalid SIC matrix: {}", format_violations(.0))]
    InvalidSic(Vec<Violation>),

    #[error("cell {cell} transmit power {power} exceeds budget {budget}")]
    PowerViolation { cell: usize, power: f64, budget: f64 },

    #[error("non-finite objective encountered: {0}")]
    NonFinite(String),

    #[error("GNN weight shape mismatch: {0}")]
    Shape(String),

    #[error("config syntax error at line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("weights file format error: {0}")]
    WeightsFormat(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from user-supplied configuration rather than
    /// from running the simulation.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::ConfigSyntax { .. } | Error::Config { .. } | Error::InvalidParameter { .. }
        )
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

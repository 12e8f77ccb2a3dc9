use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Panel ingestion failure; `row` is the 1-based data row (header excluded).
    #[error("row {row}: {msg}")]
    Panel { row: usize, msg: String },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    /// Neither weight construction nor target positivity holds somewhere
    /// the intervention reaches.
    #[error("identification violation at t={t}{}: {msg}", history.as_ref().map(|h| format!(" (history {h})")).unwrap_or_default())]
    Identification {
        t: usize,
        history: Option<String>,
        msg: String,
    },

    #[error("backend failure at t={t}, fold {fold}: {msg}")]
    Backend { t: usize, fold: usize, msg: String },

    #[error("undefined estimand: {0}")]
    UndefinedEstimand(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

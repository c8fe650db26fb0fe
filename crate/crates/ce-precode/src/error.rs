use thiserror::Error;

/// Errors shared by all modules.
#[derive(Debug, Error)]
pub enum CeError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("channel matrix is numerically rank deficient (condition number {cond:.3e} > {limit:.1e})")]
    RankDeficient { cond: f64, limit: f64 },

    #[error("bracket failure: {0}")]
    Bracket(String),

    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CeError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CeError::Io {
            path: path.into(),
            source,
        }
    }
}

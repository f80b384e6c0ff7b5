use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Library(#[from] ricci_tunnel::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("report error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema mismatch: report version {found}, expected {expected}")]
    Schema { found: u32, expected: u32 },
}

impl CliError {
    /// 2 for unusable input, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Schema { .. } => 2,
            _ => 1,
        }
    }
}

use crof_core::CrofError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] clap::Error),
    #[error(transparent)]
    Core(#[from] CrofError),
}

/// Process exit code per error kind. Usage errors use clap's code 2.
pub fn exit_code(err: &CrofError) -> i32 {
    match err {
        CrofError::Storage { .. } => 3,
        CrofError::Format(_) => 4,
        CrofError::Length(_) => 5,
        CrofError::Value(_) => 6,
        CrofError::Shape(_) => 7,
        CrofError::Config(_) => 8,
        CrofError::Index(_) => 9,
        CrofError::DegenerateFusion { .. } => 10,
        CrofError::DegenerateFeature { .. } => 11,
        CrofError::UnknownStrategy { .. } => 12,
        CrofError::Invariant(_) => 13,
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Engine(#[from] lsw_core::Error),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

impl CliError {
    /// 2 for input that cannot describe a valid run, 3 when the numerics
    /// fail on a valid input.
    pub fn exit_code(&self) -> u8 {
        use lsw_core::Error as E;
        match self {
            CliError::Validation(_) => 2,
            CliError::Engine(e) => match e {
                E::DimensionMismatch { .. }
                | E::UnknownSymbol(_)
                | E::Syntax { .. }
                | E::OrderUnavailable { .. }
                | E::InhomogeneousUnsupported
                | E::InvalidArgument(_) => 2,
                _ => 3,
            },
            CliError::Write { .. } => 3,
        }
    }
}

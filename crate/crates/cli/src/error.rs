use std::process::ExitCode;

use hankel_path::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(2),
            CliError::Solver(_) | CliError::Output(_) => ExitCode::from(1),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Empty
            | Error::EvenLength(_)
            | Error::NonFinite { .. }
            | Error::InvalidParameter(_)
            | Error::Shape(_) => CliError::Input(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

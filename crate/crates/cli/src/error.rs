use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] firecox::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("cannot read {0}: {1}")]
    Input(String, std::io::Error),
    #[error("cannot write {0}: {1}")]
    Output(String, std::io::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 for bad input, 1 for failures on our side.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if !e.is_validation() => 1,
            CliError::Output(..) => 1,
            _ => 2,
        }
    }
}

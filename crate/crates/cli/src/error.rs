use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] fracgame_core::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical breakdown.
    pub fn exit_code(&self) -> u8 {
        use fracgame_core::Error as E;
        match self {
            CliError::Core(E::Divergence(_) | E::Accuracy(_) | E::Conditioning(_) | E::DivergentKernel(_)) => 3,
            _ => 2,
        }
    }
}

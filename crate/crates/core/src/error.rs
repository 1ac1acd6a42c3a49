use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument to a pure function (lengths, empty input, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Config file problem tied to a specific line.
    #[error("config line {line}: {msg}")]
    ConfigLine { line: usize, msg: String },

    #[error("excitation design error: {0}")]
    Design(String),

    #[error("simulation fault: {0}")]
    Simulation(String),

    /// Closed-loop experiment became unstable.
    #[error("experiment unstable at sample {sample}: {reason}")]
    Unstable { sample: usize, reason: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("training error at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    #[error("metric undefined: {0}")]
    Metric(String),

    /// Malformed data file content.
    #[error("{file}: row {row}: {msg}")]
    Parse { file: String, row: usize, msg: String },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Unstable { .. } | Error::Simulation(_) => 3,
            Error::Training { .. } => 4,
            _ => 2,
        }
    }
}

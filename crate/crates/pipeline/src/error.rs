use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing {what} at {path}; run `f2f {stage}` first")]
    MissingArtifact {
        what: &'static str,
        path: PathBuf,
        stage: &'static str,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] f2f_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Self::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// 2 for configuration problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use f2f_core::Error as C;
        match self {
            Error::Config(_) | Error::MissingArtifact { .. } => 2,
            Error::Core(C::InvalidConfig(_) | C::DimensionMismatch { .. } | C::NotEnoughFrames { .. }) => 2,
            Error::Core(C::NonFinite(_) | C::RankDeficient(_) | C::EmptyVisibility | C::MouthHidden(_)) => 3,
            _ => 1,
        }
    }
}

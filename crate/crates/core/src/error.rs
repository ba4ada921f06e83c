use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no visible pixels; re-initialize the pose")]
    EmptyVisibility,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("transfer operator is rank deficient: {0}")]
    RankDeficient(String),

    #[error("mouth region hidden: only {0:.2} of its triangles face the camera")]
    MouthHidden(f64),

    #[error("not enough frames: need {needed}, have {have}")]
    NotEnoughFrames { needed: usize, have: usize },

    #[error("corrupt container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("study inconsistent: {0}")]
    StudyInconsistent(String),
    #[error("missing modality: {0}")]
    MissingModality(String),
    #[error("study {0} has no ground truth")]
    MissingGroundTruth(String),
    #[error("volume has no foreground voxels")]
    EmptyForeground,
    #[error("volume standard deviation {0} is too small to normalize")]
    DegenerateVolume(f64),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("batch norm needs at least two values per channel in train mode")]
    DegenerateBatch,
    #[error("label error: {0}")]
    Label(String),
    #[error("no training slices left after filtering")]
    NoTrainingData,
    #[error("mask is empty")]
    EmptyMask,
    #[error("whole-lesion mask is empty")]
    EmptyLesion,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} needs {missing}")]
    StageDependency { stage: String, missing: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage names used to tag wrapped errors.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Normalize,
    Detect,
    SelectPegs,
    InferScale,
    ComputeRoi,
    ExtractRoi,
    Enhance,
    Save,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Load => "load",
            Stage::Normalize => "normalize",
            Stage::Detect => "detect",
            Stage::SelectPegs => "select_pegs",
            Stage::InferScale => "infer_scale",
            Stage::ComputeRoi => "compute_roi",
            Stage::ExtractRoi => "extract_roi",
            Stage::Enhance => "enhance",
            Stage::Save => "save",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("NotFound: {}", .0.display())]
    NotFound(PathBuf),

    #[error("UnsupportedFormat: {0}")]
    UnsupportedFormat(String),

    #[error("CorruptData: {0}")]
    CorruptData(String),

    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),

    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),

    #[error("ImageTooSmall: {width}x{height}, need at least {min}x{min}")]
    ImageTooSmall { width: u32, height: u32, min: u32 },

    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),

    #[error("NoPegsFound: {admissible} admissible circle(s) among {candidates} candidate(s)")]
    NoPegsFound {
        candidates: usize,
        admissible: usize,
    },

    #[error("RoiUnplaceable: {0}")]
    RoiUnplaceable(String),

    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),

    #[error("ConventionError: {0}")]
    Convention(String),

    #[error("ConfigError: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps the error with the stage it was raised in.
    pub fn at(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The failing stage, if the error was raised inside the extraction pipeline.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// The innermost error, with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Short machine-friendly name of the innermost error kind.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::NotFound(_) => "NotFound",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::CorruptData(_) => "CorruptData",
            Error::Io(_) => "IoError",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::ImageTooSmall { .. } => "ImageTooSmall",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NoPegsFound { .. } => "NoPegsFound",
            Error::RoiUnplaceable(_) => "RoiUnplaceable",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::Convention(_) => "ConventionError",
            Error::Config(_) => "ConfigError",
            Error::Stage { .. } => unreachable!(),
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}

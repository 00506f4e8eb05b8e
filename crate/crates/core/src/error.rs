use std::io;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("trace contains no valid frames")]
    EmptyTrace,

    #[error("CSV header is missing required column `{0}`")]
    MissingColumn(String),

    #[error("CAN ID {can_id:#x} has too few usable frames ({frames}) for feature computation")]
    TooFewFrames { can_id: u32, frames: usize },

    #[error("invalid bit range {start}..={end} for a {width}-bit payload")]
    InvalidRange { start: u32, end: u32, width: u32 },

    #[error("no slice has a positive labeling parameter")]
    NoActiveSignals,

    #[error("PID {0:#04x} is not supported")]
    UnsupportedPid(u8),

    #[error("PID {pid:#04x} needs {needed} data bytes, got {got}")]
    ShortData { pid: u8, needed: usize, got: usize },

    #[error("series of length {0} is too short for DTW (need at least 2)")]
    SeriesTooShort(usize),

    #[error("no templates available for matching")]
    NoTemplates,

    #[error("DBC text contains no BO_ definitions")]
    NoDefinitions,

    #[error("inferred and ground-truth maps share no CAN IDs")]
    NoOverlap,

    #[error("general-label evaluation requires category annotations")]
    MissingAnnotations,

    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyTrace => "EmptyTrace",
            Error::MissingColumn(_) => "MissingColumn",
            Error::TooFewFrames { .. } => "TooFewFrames",
            Error::InvalidRange { .. } => "InvalidRange",
            Error::NoActiveSignals => "NoActiveSignals",
            Error::UnsupportedPid(_) => "UnsupportedPid",
            Error::ShortData { .. } => "ShortData",
            Error::SeriesTooShort(_) => "SeriesTooShort",
            Error::NoTemplates => "NoTemplates",
            Error::NoDefinitions => "NoDefinitions",
            Error::NoOverlap => "NoOverlap",
            Error::MissingAnnotations => "MissingAnnotations",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::Invalid(_) => "Invalid",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
            Error::Toml(_) => "Toml",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

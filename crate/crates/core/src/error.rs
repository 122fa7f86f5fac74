use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the odometry back-end.
///
/// The variants fall into three families that the command-line front-end maps
/// onto stable exit codes: configuration problems, I/O and file-format
/// problems, and numerical failures.
#[derive(Error, Debug)]
pub enum Error {
    /// An input lies outside the domain of a mathematical operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is invalid. `field` is a dotted path such as
    /// `noise.gamma_disp`.
    #[error("invalid config at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("failed to parse config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file exists but its contents do not follow the expected layout.
    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("frame/pose count mismatch: {frames} frame files, {poses} pose lines")]
    FramePoseMismatch { frames: usize, poses: usize },

    #[error("no depth support: every pixel in the patch is invalid")]
    NoDepthSupport,

    #[error("insufficient keypoints: {found} survived selection, at least {required} required")]
    InsufficientKeypoints { found: usize, required: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate scale: estimated trajectory has no motion")]
    DegenerateScale,

    #[error("trajectory association failed; unmatched timestamps: {}", format_stamps(.unmatched))]
    Association { unmatched: Vec<f64> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

fn format_stamps(stamps: &[f64]) -> String {
    stamps.iter().map(|t| format!("{t}")).collect::<Vec<_>>().join(", ")
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code for this error: 1 for configuration errors, 2 for
    /// I/O and file-format errors, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::ConfigParse { .. } => 1,
            Error::Io { .. } | Error::Format { .. } | Error::FramePoseMismatch { .. } | Error::Association { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

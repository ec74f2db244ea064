use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported or malformed image {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid dimensions {width}x{height} for {len} samples")]
    InvalidDimensions { width: usize, height: usize, len: usize },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("image is empty")]
    EmptyImage,
    #[error("image {width}x{height} is smaller than the required {min}x{min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("line segment has coincident endpoints")]
    DegenerateSegment,
    #[error("degenerate quadrilateral: {0}")]
    DegenerateQuad(String),
    #[error("point maps to infinity under the homography")]
    PointAtInfinity,
    #[error("homography is singular")]
    DegenerateHomography,
    #[error("aligned region is degenerate")]
    DegenerateOutput,
    #[error("need at least {required} matches, got {actual}")]
    InsufficientMatches { required: usize, actual: usize },
    #[error("no valid model found")]
    NoModel,
    #[error("tracked quad is degenerate: {0}")]
    DegenerateTrack(String),
    #[error("input lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by reading or decoding files.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. })
    }
}

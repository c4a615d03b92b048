use std::path::PathBuf;

/// Errors produced by the localization pipeline and its building blocks.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("singular configuration: {0}")]
    Singular(String),
    #[error("point maps to infinity under homography")]
    PointAtInfinity,
    #[error("crosshair center lies outside the square quadrilateral")]
    OutsideSquare,
    #[error("unknown tag id {0}")]
    UnknownTag(u8),
    #[error("grid misdetection: square offset ({0:.3}, {1:.3}) is not close to an integer")]
    GridMisdetection(f64, f64),
    #[error("timestamp {current} does not follow {previous}")]
    NonMonotonicTimestamp { previous: f64, current: f64 },
    #[error("no matched pose pairs between estimate and ground truth")]
    NoMatches,
    #[error("pose outside the generated floor extent at ({0:.3}, {1:.3})")]
    OutsideFloor(f64, f64),
    #[error("image i/o error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("value error: {0}")]
    Value(String),

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("degenerate mask for image {image_id}: {reason}")]
    DegenerateMask { image_id: String, reason: String },

    #[error("isolated node {0} in affinity graph")]
    IsolatedNode(usize),

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("empty library: {0}")]
    EmptyLibrary(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("image {image_id}: {source}")]
    Image {
        image_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches an image id to an error raised while processing that image.
    pub fn for_image(self, image_id: &str) -> Self {
        match self {
            e @ (Error::Image { .. } | Error::DegenerateMask { .. }) => e,
            other => Error::Image {
                image_id: image_id.to_string(),
                source: Box::new(other),
            },
        }
    }

    /// Strips [`Error::Image`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Image { source, .. } => source.root(),
            other => other,
        }
    }
}

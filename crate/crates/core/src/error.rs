use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("unsupported size: {0}")]
    UnsupportedSize(String),

    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    #[error("{0} layers are forward-only and cannot be trained")]
    UnsupportedInTraining(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed input file. `field` names what was being read when the
    /// problem was found and `offset` is the byte position of that field.
    #[error("format error in {field} at byte offset {offset}: {detail}")]
    Format {
        field: &'static str,
        offset: u64,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}

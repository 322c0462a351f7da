use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("cannot apply gate: {0}")]
    Application(String),
    #[error("value out of range: {0}")]
    Range(String),
    /// Numerical drift that indicates a simulator bug rather than bad input.
    #[error("internal consistency error: {0}")]
    Consistency(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("corrupt file: {0}")]
    Format(#[from] FormatError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

/// Errors raised while decoding the binary cache and checkpoint formats.
/// Each variant names the field that failed validation.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {0}")]
    BadVersion(u16),
    #[error("truncated while reading {0}")]
    Truncated(&'static str),
    #[error("CRC32 mismatch: stored {stored:08x}, computed {computed:08x}")]
    BadCrc { stored: u32, computed: u32 },
    #[error("invalid {field}: {detail}")]
    BadField { field: &'static str, detail: String },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
}

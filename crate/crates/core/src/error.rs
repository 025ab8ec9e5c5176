use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("unknown topology preset `{0}` (expected mpii14 or coco18)")]
    UnknownPreset(String),

    #[error("degenerate limb segment: endpoints coincide at ({x}, {y})")]
    DegenerateSegment { x: f64, y: f64 },

    #[error("grid dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("instance too large for exhaustive search: {0}")]
    InstanceTooLarge(String),

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error("scene placement failed after {attempts} attempts for person {person}: cannot satisfy {constraint}")]
    Placement {
        person: usize,
        attempts: usize,
        constraint: &'static str,
    },

    #[error("bad magic {found:?}, expected \"PAFT\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported PAFT version {0} (expected 1)")]
    Version(u32),

    #[error("truncated input: needed {needed} bytes at offset {offset}, only {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("invalid header: {0}")]
    Header(String),

    #[error("{trailing} trailing bytes after payload")]
    TrailingBytes { trailing: usize },

    #[error("non-finite value at element {0}")]
    NonFinite(usize),

    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn syntax(line: usize, message: impl Into<String>) -> Self {
        Error::Syntax {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

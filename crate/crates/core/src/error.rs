use std::fs::File;
use std::path::{Path, PathBuf};

/// Errors raised anywhere in the library.
///
/// The variants are grouped so that a front end can map them onto process
/// exit codes with [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument to {op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },

    #[error("variable does not belong to the active tape")]
    ForeignVar,

    #[error("non-finite value in parameter {param} at index {index}")]
    NonFinite { param: usize, index: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate orientation: norm {norm:e}")]
    DegenerateQuaternion { norm: f64 },

    #[error("not a rotation matrix: orthonormality deviation {orthogonality:e}, determinant {det}")]
    NotRotation { orthogonality: f64, det: f64 },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("format version mismatch: expected {expected}, found {found}")]
    Version { expected: String, found: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("image decode error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(op: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Parse { .. }
            | Error::Version { .. }
            | Error::Data(_)
            | Error::Image(_)
            | Error::Io(_)
            | Error::NotRotation { .. }
            | Error::DegenerateQuaternion { .. } => 2,
            Error::ShapeMismatch { .. }
            | Error::InvalidArgument { .. }
            | Error::ForeignVar
            | Error::NonFinite { .. }
            | Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// `File::open` with the path in the error message.
pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))
}

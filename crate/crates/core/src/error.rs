use std::path::PathBuf;

/// Errors raised while building meshes, assembling or solving a multimesh
/// Stokes system.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid placement: {0}")]
    InvalidPlacement(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported element degree {0} (supported: {1})")]
    UnsupportedDegree(usize, &'static str),

    #[error("cell {cell} is not an active cell of mesh {mesh}")]
    CellMismatch { mesh: usize, cell: usize },

    #[error("velocity node {node} of mesh {mesh} lies on the outer boundary")]
    BoundaryDof { mesh: usize, node: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("level {level} (seed {seed}): {source}")]
    Study {
        level: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed configuration: {0}")]
    Config(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

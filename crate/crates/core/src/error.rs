use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid local term: {0}")]
    InvalidTerm(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("state is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("Hilbert space dimension {dim} exceeds the dense cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("eigensolver did not converge")]
    NoConvergence,

    #[error("invalid energy distribution: {0}")]
    InvalidDistribution(String),

    #[error("time grid too coarse to unwrap the phase at index {index} (phase step {step:.3} rad); refine the grid")]
    GridTooCoarse { index: usize, step: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("energy variance vanishes (the state is an eigenstate)")]
    ZeroVariance,

    #[error("interval l = {0} carries no weight")]
    EmptyInterval(i64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn file(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::File { path: path.display().to_string(), source }
    }
}

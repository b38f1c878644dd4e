use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid model: {0}")]
    Validation(String),

    #[error("pose unreachable for chain {chain}")]
    UnreachablePose { chain: usize },

    #[error("forward kinematics did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular configuration: {what} has condition number {cond:e}")]
    SingularConfiguration { what: &'static str, cond: f64 },

    #[error("force magnitude {norm:e} N is below the line-of-action floor")]
    DegenerateForce { norm: f64 },

    #[error("line of action misses the platform hull")]
    NoIntersection,

    #[error("line of action grazes the platform hull at a single point")]
    TangentLine { point: [f64; 2], lambda: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training diverged: loss became {loss} at epoch {epoch}")]
    NanLoss { epoch: usize, loss: f64 },

    #[error("class {0} has no samples")]
    EmptyClass(String),

    #[error("workspace too tight: {accepted} of {tried} pose samples accepted")]
    WorkspaceTooTight { accepted: usize, tried: usize },

    #[error("collision was never detected within {horizon_s} s")]
    DetectionNeverTriggers { horizon_s: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

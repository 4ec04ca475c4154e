use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("quantile level {0} outside (0, 1]")]
    InvalidLevel(f64),
    #[error("miscoverage level {0} outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("distribution mass sums to {total}, expected 1 within 1e-9")]
    Unnormalized { total: f64 },
    #[error("invalid atom: {0}")]
    InvalidAtom(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("ridge normal equations are singular")]
    SingularSystem,
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("predictor family `{0}` is not differentiable")]
    UnsupportedFamily(&'static str),
    #[error("all weights are zero")]
    DegenerateWeights,
    #[error("tilting exponent {exponent} would overflow; the shift is pathological")]
    TiltOverflow { exponent: f64 },
    #[error("requested {requested} samples from a pool of {pool}")]
    SampleTooLarge { requested: usize, pool: usize },
    #[error("classes are linearly separable (weight norm {norm:.3e}); add regularization")]
    Separation { norm: f64 },
    #[error("conjugate gradient did not converge (relative residual {residual:.3e})")]
    CgNotConverged { residual: f64 },
    #[error("parameters are not stationary (|G|_inf = {grad_norm:.3e})")]
    NotStationary { grad_norm: f64 },
    #[error("leave-one-out fit {index} failed: {source}")]
    LooFit {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("cv folds {k} out of range for n = {n}")]
    FoldsOutOfRange { k: usize, n: usize },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("AUROC undefined: labels are all {0}")]
    UndefinedAuroc(&'static str),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

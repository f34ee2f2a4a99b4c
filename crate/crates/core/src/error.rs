use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmmError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("zero input: {0}")]
    ZeroInput(String),
    #[error("AB = 0: the product has zero Frobenius norm")]
    ZeroProduct,
    #[error("operator is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error("register `{0}` already exists")]
    RegisterCollision(String),
    #[error("layout of {requested} qubits exceeds the cap of {cap} (set QMM_MAX_QUBITS to raise it)")]
    QubitBudget { requested: usize, cap: usize },
    #[error("outcome {outcome} of register `{register}` has zero probability")]
    ZeroProbability { register: String, outcome: usize },
    #[error("probability must lie in (0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("function is not even over the phase labels (mismatch at label {0})")]
    NotEven(usize),
    #[error("rotation undefined: scale * value = {0} exceeds 1")]
    RotationOverflow(f64),
    #[error("value {value} does not fit a fixed-point register of {bits} bits")]
    EncodingOverflow { value: f64, bits: usize },
    #[error("support violation: {0}")]
    Support(String),
    #[error("evolution time too long: |f t| = {0} must stay below 1")]
    TimeOverflow(f64),
    #[error("linear combination cancels exactly")]
    Cancellation,
    #[error("SVD did not converge")]
    NoConvergence,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
    #[error("{context}: {inner}")]
    Context { context: String, inner: Box<QmmError> },
}

pub type Result<T> = std::result::Result<T, QmmError>;

impl QmmError {
    pub fn context(self, context: impl Into<String>) -> Self {
        QmmError::Context { context: context.into(), inner: Box::new(self) }
    }
}

impl From<std::io::Error> for QmmError {
    fn from(e: std::io::Error) -> Self {
        QmmError::Io(e.to_string())
    }
}

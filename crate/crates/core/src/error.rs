use thiserror::Error;

/// Everything that can go wrong inside the engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),

    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("operator is not diagonalizable (eigenvector condition number {condition:.3e})")]
    DefectiveOperator { condition: f64 },

    #[error("no zero eigenvalue found; zero tolerance too small or generator invalid")]
    EmptySlowSpace,

    #[error("fast space contains a zero eigenvalue")]
    ZeroGap,

    #[error("order {requested} requested but only {available} computed")]
    OrderUnavailable { requested: usize, available: usize },

    #[error("slow space does not factorize as a fixed ancilla state times the system operator space")]
    NonProductSlowSpace,

    #[error("steady state is not unique (zero eigenvalue multiplicity {multiplicity})")]
    DegenerateSteadyState { multiplicity: usize },

    #[error("Bloch matrix has an eigenvalue with real part {max_real:.3e} >= 0")]
    UnstableBlochMatrix { max_real: f64 },

    #[error("Bloch matrix is singular")]
    SingularBlochMatrix,

    #[error("coefficient matrix is not positive semidefinite (min eigenvalue {eigmin:.3e})")]
    NotPositive { eigmin: f64 },

    #[error("integrator step size underflow at t = {time}")]
    ToleranceNotMet { time: f64 },

    #[error("inhomogeneous hyperfine couplings are not supported")]
    InhomogeneousUnsupported,

    #[error("eigensolver did not converge")]
    NoConvergence,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid exponents: {0}")]
    InvalidExponents(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("the evaluation set contains an atom")]
    AtomInEvaluationSet,

    #[error("measure is not radial about a single center: {0}")]
    NonRadialMeasure(String),

    #[error("no solution exists: {0}")]
    NonexistenceDetected(String),

    #[error("iteration stopped after {iterations} steps with residual {residual:e}")]
    NonconvergentIteration { iterations: usize, residual: f64 },

    #[error("local solve failed: {0}")]
    NonconvergentLocalSolve(String),

    #[error("iterates exceed {bound:e} at radius {radius:e}")]
    UnboundedIterates { radius: f64, bound: f64 },

    #[error("no admissible starting constant after {halvings} halvings")]
    NoSubsolution { halvings: usize },

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

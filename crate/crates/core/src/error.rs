use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("horizon {horizon} exceeds the enumeration cap of {cap}")]
    HorizonTooLarge { horizon: usize, cap: usize },

    #[error("operation requires exactly {expected} walks, ensemble has {actual}")]
    WrongWalkCount { expected: usize, actual: usize },

    #[error("invalid walk ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("invalid walk path: {0}")]
    InvalidPath(String),

    #[error("time {0} lies outside (0, 1]")]
    TimeOutOfDomain(f64),

    #[error("heat kernel requires t > 0, got {0}")]
    NonPositiveTime(f64),

    #[error("quadrature produced a non-finite value on the rectangle")]
    QuadratureFailure,

    #[error("U-statistic would visit {cells:.3e} cells, guard is {limit:.0e}")]
    ComplexityGuard { cells: f64, limit: f64 },

    #[error("chaos order {requested} requested but expansion truncated at {max_order}")]
    TruncationOrder { requested: usize, max_order: usize },

    #[error("exact chaos expansion supports N <= {cap}, got {horizon}")]
    ExactExpansionTooLarge { horizon: usize, cap: usize },

    #[error("test function is negative ({value}) at (t, x) = ({t}, {x})")]
    NegativeTestFunction { t: f64, x: f64, value: f64 },

    #[error("grid resolution: {0}")]
    Resolution(String),

    #[error("replicate {index} produced a non-finite sample ({value})")]
    NonFiniteSample { index: usize, value: f64 },

    #[error("generated weight X = {0} is negative")]
    NegativeWeight(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel matrix is not positive definite")]
    NonPositiveDefinite,
    #[error("training set contains duplicate inputs ({0} and {1})")]
    SingularTrainingSet(usize, usize),
    #[error("invalid training set: {0}")]
    InvalidTrainingSet(String),
    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("point ({0}, {1}) lies outside the map")]
    OutOfBounds(f64, f64),
    #[error("free space too small: gave up after {0} rejected samples")]
    FreeSpaceTooSmall(usize),
    #[error("could not find enough start/goal pairs ({found} of {wanted})")]
    PairBudgetExhausted { found: usize, wanted: usize },
    #[error("curve parameter {0} outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("control polygon needs at least 2 finite points")]
    InvalidPolygon,
    #[error("start and goal coincide")]
    DegenerateEndpoints,
    #[error("no path between start and goal")]
    NoPath,
    #[error("start or goal is blocked")]
    StartOrGoalBlocked,
    #[error("tree did not reach the goal within {0} iterations")]
    MaxIterationsExceeded(usize),
    #[error("path is empty")]
    EmptyPath,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used in benchmark records.
    pub fn status(&self) -> &'static str {
        match self {
            Error::NonPositiveDefinite => "non_positive_definite",
            Error::SingularTrainingSet(..) => "singular_training_set",
            Error::InvalidTrainingSet(_) => "invalid_training_set",
            Error::InvalidParams(_) => "invalid_params",
            Error::InvalidConfig(_) => "invalid_config",
            Error::OutOfBounds(..) => "out_of_bounds",
            Error::FreeSpaceTooSmall(_) => "free_space_too_small",
            Error::PairBudgetExhausted { .. } => "pair_budget_exhausted",
            Error::ParameterOutOfRange(_) => "parameter_out_of_range",
            Error::InvalidPolygon => "invalid_polygon",
            Error::DegenerateEndpoints => "degenerate_endpoints",
            Error::NoPath => "no_path",
            Error::StartOrGoalBlocked => "start_or_goal_blocked",
            Error::MaxIterationsExceeded(_) => "max_iterations_exceeded",
            Error::EmptyPath => "empty_path",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

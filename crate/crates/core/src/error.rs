use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("softmax over a fully masked row")]
    FullyMasked,
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("node {0} is not on this tape")]
    UnknownNode(usize),
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid ranker config: {0}")]
    InvalidConfig(String),
    #[error("batch does not match the model: {0}")]
    BatchMismatch(String),
    #[error("flat parameter vector has length {got}, expected {expected}")]
    FlatLength { got: usize, expected: usize },
    #[error("loss for task {task} is not finite")]
    NonFiniteLoss { task: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BalanceError {
    #[error("balancer needs at least two tasks, got {0}")]
    TooFewTasks(usize),
    #[error("expected {expected} task values, got {got}")]
    TaskCount { expected: usize, got: usize },
    #[error("loss for task {task} must be positive, got {value}")]
    NonPositiveLoss { task: usize, value: f64 },
    #[error("gradient row {0} has zero norm")]
    ZeroGradient(usize),
    #[error("gradient matrix contains non-finite entries")]
    NonFiniteGradient,
    #[error("Nash bargaining iteration diverged (weight {0:e})")]
    NashDivergence(f64),
    #[error("invalid balancer parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("cutoff k must be at least 1")]
    InvalidCutoff,
    #[error("points have inconsistent dimensions or orientations")]
    Inconsistent,
    #[error("hypervolume supports 2 or 3 objectives, got {0}")]
    UnsupportedDimension(usize),
    #[error("too many non-dominated points ({0}) for inclusion-exclusion")]
    TooManyPoints(usize),
    #[error("baseline coordinate {0} is zero")]
    ZeroBaseline(usize),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("input contains no data lines")]
    Empty,
    #[error("invalid task derivation spec: {0}")]
    InvalidSpec(String),
    #[error("auxiliary feature {0} is outside the feature space")]
    MissingAuxiliary(u32),
    #[error("feature id {id} exceeds the feature space of {max}")]
    FeatureOutOfRange { id: u32, max: u32 },
    #[error("label for task {task} in query {qid} is invalid: {value}")]
    InvalidLabel { task: usize, qid: String, value: f64 },
    #[error("dataset dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite loss at step {step} (task {task})")]
    NonFiniteLoss { step: usize, task: usize },
    #[error("inconsistent configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(ModelError::Tensor(e))
    }
}

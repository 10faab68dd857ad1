use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("budget exceeded: {what} needs {needed}, limit {limit}")]
    BudgetExceeded {
        what: &'static str,
        needed: u128,
        limit: u128,
    },
    #[error("empty window: no point of the set within radius {radius} of {center:?}")]
    EmptyWindow { center: Vec<f64>, radius: f64 },
    #[error("sub-resolution scale: {scale} < {resolution}")]
    SubResolution { scale: f64, resolution: f64 },
    #[error("zero test function")]
    ZeroTestFunction,
    #[error("not a cover: leaf {leaf} at {point:?} is uncovered")]
    NotACover { leaf: usize, point: Vec<f64> },
    #[error("sub-resolution witness: {0}")]
    SubResolutionWitness(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("missing estimate: {0}")]
    MissingEstimate(&'static str),
    #[error("mixed domains in refinement study: {0}")]
    MixedDomains(String),
    #[error("set has positive measure at grid resolution (node {node})")]
    PositiveMeasure { node: usize },
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Invalid(msg.into()))
}

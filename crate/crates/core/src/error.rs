use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid weight {0}: weights must be positive and finite")]
    InvalidWeight(f64),
    #[error("invalid threshold {0}")]
    InvalidThreshold(f64),
    #[error("invalid sample size: {0}")]
    InvalidSampleSize(String),
    #[error("incompatible thresholds: {0}")]
    IncompatibleThresholds(String),
    #[error("item with weight {weight} is heavy (1/w < tau = {tau}) but the sampler is in steady state")]
    HeavyItemUnderSteadyState { weight: f64, tau: f64 },
    #[error("threshold rule increased the threshold from {from} to {to}")]
    ThresholdIncreased { from: f64, to: f64 },
    #[error("memory budget {budget} cannot hold {strata} strata")]
    BudgetExhausted { budget: usize, strata: usize },
    #[error("retained item {0} has zero inclusion probability")]
    DegenerateInclusion(String),
    #[error("estimator of degree {degree} exceeds the sample's degree cap {cap}")]
    DegreeCapViolation { degree: usize, cap: usize },
    #[error("sample does not carry its threshold source item")]
    MissingThresholdSource,
    #[error("exact normalisation requested but no population weight total was supplied")]
    MissingAlpha,
    #[error("sample is empty")]
    EmptySample,
    #[error("optimizer did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize, last: Vec<f64> },
    #[error("resample size {requested} exceeds sample size {available}")]
    InsufficientSample { requested: usize, available: usize },
    #[error("incompatible priority families: {0} vs {1}")]
    IncompatibleFamilies(String, String),
    #[error("duplicate item id {0}")]
    DuplicateItem(String),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed envelope at line {line}: {reason}")]
    Envelope { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

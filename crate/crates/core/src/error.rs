use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {value} at position {index} is outside [0, 1]")]
    ParameterOutOfRange { index: usize, value: f64 },
    #[error("a PBD needs at least one component")]
    EmptyModel,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("epsilon must lie in (0, 1/2), got {0}")]
    Epsilon(f64),
    #[error("sample set is empty")]
    EmptySamples,
    #[error("sample value {value} exceeds n = {n}")]
    SampleOutOfRange { value: u64, n: usize },
    #[error("sketches differ in shape: M {0} vs {1}, L {2} vs {3}")]
    SketchMismatch(u64, u64, usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("system does not match the regime: {0}")]
    RegimeMismatch(String),
    #[error("need at least {need} samples, got {have}")]
    InsufficientSamples { have: usize, need: usize },
    #[error("variance {variance} exceeds the sparsifier cap {cap}")]
    VarianceCap { variance: f64, cap: f64 },
    #[error("no feasible system among the first {tried} candidates (last free-triple count {free_count})")]
    Exhausted { tried: u64, free_count: usize },
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ParameterOutOfRange { .. } => "parameter_out_of_range",
            Error::EmptyModel => "empty_model",
            Error::InvalidModel(_) => "invalid_model",
            Error::Epsilon(_) => "invalid_epsilon",
            Error::EmptySamples => "empty_samples",
            Error::SampleOutOfRange { .. } => "sample_out_of_range",
            Error::SketchMismatch(..) => "sketch_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::RegimeMismatch(_) => "regime_mismatch",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::VarianceCap { .. } => "variance_cap",
            Error::Exhausted { .. } => "exhausted",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 0.5 {
        Ok(())
    } else {
        Err(Error::Epsilon(eps))
    }
}

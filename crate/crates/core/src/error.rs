use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("point {point:?} lies outside the analytic domain of the phase")]
    OutOfDomain { point: Vec<f64> },

    #[error("derivative order {0} exceeds the supported maximum of 3")]
    UnsupportedOrder(u32),

    #[error("unknown registry name `{0}`")]
    UnknownName(String),

    #[error("empty interval [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("log-chirp support [{lo}, {hi}] must lie in (0, ∞)")]
    NonPositiveSupport { lo: f64, hi: f64 },

    #[error("quadrature needs {needed} nodes, budget is {budget}")]
    BudgetExceeded { needed: u64, budget: u64 },

    #[error("resolution {resolution} too low, at least {required} needed")]
    ResolutionTooLow { resolution: usize, required: usize },

    #[error("gradient degenerates at {at:?}")]
    DegenerateGradient { at: Vec<f64> },

    #[error("mixed second partial vanishes at {at:?}")]
    DegenerateMixedPartial { at: Vec<f64> },

    #[error("characteristic ODE hits a vanishing denominator at {at:?}")]
    OdeSingularity { at: Vec<f64> },

    #[error("λ = {0} is below the minimum of 4 for a bump partition")]
    LambdaTooSmall(f64),

    #[error("{have} samples supplied, at least {need} required")]
    UnderSampled { have: usize, need: usize },

    #[error("decomposition λ = {decomposition} does not match partition λ = {partition}")]
    MismatchedLambda { decomposition: f64, partition: f64 },

    #[error("zero magnitude on rung {rung} (λ = {lambda})")]
    DegeneratePoints { rung: usize, lambda: f64 },

    #[error("ε = {0} is not the inverse of a perfect square")]
    NonSquareInverse(f64),

    #[error("A = {a} exceeds the resolvable limit {limit}")]
    UnderResolved { a: f64, limit: f64 },

    #[error("rung λ = {lambda} failed: {source}")]
    Rung {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// True for failures of the numerics (budget, resolution, sampling), as
    /// opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::BudgetExceeded { .. }
            | Error::ResolutionTooLow { .. }
            | Error::UnderSampled { .. }
            | Error::UnderResolved { .. }
            | Error::OdeSingularity { .. }
            | Error::DegeneratePoints { .. } => true,
            Error::Rung { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("data failed validation: {0}")]
    Validation(String),
    #[error("inconsistent aggregates for country {country}: {detail}")]
    InconsistentAggregates { country: usize, detail: String },
    #[error("intermediate use exceeds sales in cell (importer {i}, exporter {j}, sector {s})")]
    NegativeLabor { i: usize, j: usize, s: usize },
    #[error("price fixed point did not converge after {iterations} iterations (change {change:e})")]
    InnerNonConvergence { iterations: usize, change: f64 },
    #[error("wage solver did not converge after {iterations} iterations (residual {residual:e})")]
    OuterNonConvergence { iterations: usize, residual: f64 },
    #[error("negative income in country {country}")]
    NegativeIncome { country: usize },
    #[error("no root in bracket [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },
    #[error("imbalance undefined: both flows are zero")]
    UndefinedImbalance,
    #[error("inelastic regime: optimal-tariff denominator vanishes")]
    InelasticRegime,
    #[error("every candidate failed to solve")]
    AllCandidatesFailed,
    #[error("singular linear system")]
    Singular,
    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

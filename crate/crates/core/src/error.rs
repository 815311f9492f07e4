use crate::wbp::WeightedTree;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Growth ran past the node budget. The tree built so far is carried along
    /// so callers can still inspect or dump it.
    #[error("node budget exceeded: {visited} nodes materialized, budget {budget}")]
    NodeBudget {
        visited: u64,
        budget: u64,
        partial: Box<WeightedTree>,
    },

    #[error("generation {requested} was not grown (tree has depth {depth})")]
    DepthNotGrown { requested: usize, depth: usize },

    #[error("no characteristic exponent found in (0, {theta_max}]: {reason}")]
    NoCharacteristicExponent { theta_max: f64, reason: String },

    /// A documented gate refused to run: the inputs fail a precondition that
    /// the operation relies on (for example a martingale-limit sampler without
    /// a verified negative drift).
    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

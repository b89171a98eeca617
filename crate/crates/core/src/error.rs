use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("density must be positive, got f(x) = {value}")]
    DensitySupport { value: f64 },

    #[error("density contract violated: {0}")]
    DensityContract(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("cloud has {n} points, above the exact-mode cap of {cap}; use pruned mode")]
    ExactCapExceeded { n: usize, cap: usize },

    #[error("spatial index error: {0}")]
    Index(String),

    #[error("cost grid error: {0}")]
    Grid(String),

    #[error("branching population exploded in generation {generation} ({population} nodes)")]
    Explosion {
        generation: usize,
        population: usize,
    },

    /// A single Monte-Carlo trial failed; `at` names the schedule point.
    #[error("trial {trial} at {at} failed: {source}")]
    Trial {
        at: String,
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("record kind mismatch: {0}")]
    Kind(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("GP conditioning failed: {0}")]
    Conditioning(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("episode already terminal at timestep {0}")]
    Terminal(usize),

    #[error("action off grid: t={t}, f={f}")]
    OffGrid { t: f64, f: f64 },

    #[error("query out of bounds: {0}")]
    OutOfBounds(String),

    #[error("belief update failed: {0}")]
    Belief(String),

    #[error("unpaired seeds: {0}")]
    Unpaired(String),

    #[error("unknown study `{0}`")]
    UnknownStudy(String),

    #[error("replicate with seed {seed} failed: {source}")]
    Replicate {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmdpError {
    #[error("invalid layer partition: {0}")]
    InvalidPartition(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid reward value {value} at (s={state}, a={action})")]
    InvalidReward {
        state: usize,
        action: usize,
        value: f64,
    },

    #[error("unknown context {0}")]
    UnknownContext(usize),

    #[error("missing policy for context {0}")]
    MissingPolicy(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("observed reward {0} is not in {{0, 1}}")]
    NonBinaryReward(f64),

    #[error("next state {next} of state {state} is not in layer {layer}")]
    LayerViolation {
        state: usize,
        next: usize,
        layer: usize,
    },

    #[error("function class is empty")]
    EmptyClass,

    #[error("round {round} is an initialization round (needs t > {n_actions})")]
    InitializationRound { round: usize, n_actions: usize },

    #[error("instance failed validation: {0}")]
    InvalidInstance(String),

    #[error("generator exhausted its rejection budget: {0}")]
    RejectionBudget(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for CmdpError {
    fn from(e: std::io::Error) -> Self {
        CmdpError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CmdpError>;

use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum UrsError {
    #[error("malformed action config: {0}")]
    Config(String),

    #[error("vertex budget exceeded (budget {budget}, needed more than {explored})")]
    BudgetExceeded { budget: usize, explored: usize },

    #[error("level {level} is not present in the level system")]
    MissingLevel { level: usize },

    #[error("level {level} is not saturated; result would be undecided")]
    Unsaturated { level: usize },

    #[error("ball type at level {level} not found in the level system (exploration too small)")]
    UnknownClass { level: usize },

    #[error("level system hash mismatch: expected {expected}, got {got}")]
    LevelSystemMismatch { expected: String, got: String },

    #[error("arrows are not composable: {0}")]
    NotComposable(String),

    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),

    #[error("operation undefined on the infinity arrow")]
    InfinityArrow,

    #[error("zero-norm fiber at class {class}: normalization undefined")]
    ZeroNormFiber { class: usize },

    #[error("fiber norm is not expressible in exact form; refuse to normalize")]
    IrrationalNorm,

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, UrsError>;

use thiserror::Error;

/// Errors raised by game construction, evaluation and the learning dynamics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("game file line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("policy has no valid block for infostate {infostate} of player {player}")]
    IncompletePolicy { player: usize, infostate: usize },

    #[error("policy file line {line}: {message}")]
    PolicyFormat { line: usize, message: String },

    #[error("non-finite reward for player {player} at history {history}, action {action}")]
    NonFiniteReward {
        history: usize,
        action: usize,
        player: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("operation requires {0}")]
    UnsupportedVariant(&'static str),

    #[error("operation not available in {0} mode")]
    UnsupportedMode(&'static str),

    #[error("non-finite score at player {player}, infostate {infostate}, action {action} (step {step})")]
    Integration {
        step: usize,
        player: usize,
        infostate: usize,
        action: usize,
    },

    #[error("rate fit: {0}")]
    Fit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

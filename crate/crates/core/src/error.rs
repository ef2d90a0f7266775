use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vertex {vertex} out of range 1..={n}")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),

    #[error("graph vertex counts differ: {0} vs {1}")]
    VertexCountMismatch(usize, usize),

    #[error("graph is not strongly connected: {0}")]
    NotStronglyConnected(String),

    #[error("vector length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("action {value} of player {player} is outside [{lo}, {hi}]")]
    OutOfBounds {
        player: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid gossip event ({active}, {neighbor}): {reason}")]
    InvalidEvent {
        active: usize,
        neighbor: usize,
        reason: &'static str,
    },

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("non-finite gradient for player {player} at iteration {iteration}")]
    NonFiniteGradient { player: usize, iteration: u64 },

    #[error("assumption gate failed: {0}")]
    AssumptionGate(String),

    #[error("size guardrail exceeded: {0}")]
    TooLarge(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

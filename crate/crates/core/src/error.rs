use thiserror::Error;

/// Errors raised by the simulation and verification pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    #[error("invalid sampling: {0}")]
    InvalidSampling(String),

    #[error(
        "grid too coarse for jump isolation: {expected:.4} expected jumps per fine step (limit 0.1); increase refine"
    )]
    GridTooCoarse { expected: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no law-of-large-numbers target: {0}")]
    NoLlnTarget(String),

    /// A theorem was requested outside its hypotheses; the message names the violated condition.
    #[error("inadmissible: {0}")]
    Inadmissible(String),

    #[error("not a Lévy model: {0}")]
    NotLevy(String),

    #[error("unbounded test function: {0}")]
    UnboundedFunction(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("jump record incomplete: {0}")]
    MissingJumpRecord(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for refusals caused by a theorem's hypotheses, as opposed to malformed input.
    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            Error::Inadmissible(_)
                | Error::NoLlnTarget(_)
                | Error::NotLevy(_)
                | Error::UnboundedFunction(_)
                | Error::DegenerateVariance(_)
                | Error::MissingJumpRecord(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

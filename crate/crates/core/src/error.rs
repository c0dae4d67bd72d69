use thiserror::Error;

/// Errors shared across the numerical core.
#[derive(Debug, Clone, Error)]
pub enum CoreError {
    /// Incompatible lattice configurations, caps, or invalid parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation received data violating its stated precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A divisor required by a homological solve fell below the floor kappa.
    /// Carries the witness so the caller can exclude the parameter point.
    #[error("small divisor |{value:.3e}| < kappa on condition {condition} at k={k:?}, blocks ({block_a:?}, {block_b:?})")]
    SmallDivisor {
        condition: &'static str,
        k: Vec<i16>,
        block_a: Option<usize>,
        block_b: Option<usize>,
        value: f64,
    },

    /// A structural invariant failed beyond numerical tolerance.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// A text artifact could not be parsed back.
    #[error("parse error: {0}")]
    Parse(String),

    /// Parameter carving left no admissible point.
    #[error("no surviving parameter point in the grid")]
    EmptySurvivors,

    /// The outer iteration hit its step bound before reaching tolerance.
    #[error("iteration did not reach tolerance within {0} outer steps")]
    NonConvergence(usize),
}

pub type Result<T> = std::result::Result<T, CoreError>;

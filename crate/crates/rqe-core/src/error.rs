//! Error type shared across the crate.

/// Errors produced by game construction, evaluation, and the solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation
    /// (non-finite entries, boundary point where an interior one is required,
    /// empty vector, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes of related objects disagree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A configuration value violates its invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A per-state stage solve inside a Bellman sweep did not converge.
    #[error("stage solve at state {state} stalled at residual {residual:.3e} after {iters} iterations")]
    StageSolve {
        state: usize,
        residual: f64,
        iters: usize,
    },

    /// A claimed equilibrium failed verification.
    #[error("equilibrium contract violated: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;

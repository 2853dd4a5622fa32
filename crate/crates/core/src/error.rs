use thiserror::Error;

/// Errors produced by model construction, solvers, and evaluators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("tabulated function queried at t = {t} beyond its grid end {t_max}")]
    Extrapolation { t: f64, t_max: f64 },

    #[error("quadrature did not converge: achieved tolerance {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("chain is not uniformly ergodic: Doeblin coefficient = {coefficient}")]
    Ergodicity { coefficient: f64 },

    #[error("iteration cap {iterations} exceeded; last span {last_span:e}")]
    Convergence { iterations: usize, last_span: f64 },

    #[error(
        "degenerate tie at state {state}: shift target {target} lies outside the \
         continuation set; retry with a smaller tie tolerance than {tie_tol:e}"
    )]
    DegenerateTie { state: usize, target: usize, tie_tol: f64 },

    #[error("invalid strategy: shift from state {state} lands at {target}, which is not a continuation state in U")]
    StrategyInvalid { state: usize, target: usize },

    #[error("enumeration guard exceeded: {n_states} states / {n_targets} targets (max {max_states}/{max_targets})")]
    SizeGuard { n_states: usize, n_targets: usize, max_states: usize, max_targets: usize },

    #[error("discount sequence too short: need {needed} entries, have {have}")]
    PhiTooShort { needed: usize, have: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("invalid model: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

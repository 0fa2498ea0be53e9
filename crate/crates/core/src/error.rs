use thiserror::Error;

/// Failures raised anywhere in the pipeline. The CLI maps each family to its own exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("coefficient series of order {order} does not converge at zeta = {zeta} (|zeta| limit {limit})")]
    SeriesDivergence { order: usize, zeta: f64, limit: f64 },

    #[error("coefficient matrix for layout {layout} is ill-conditioned (cond = {cond:.3e})")]
    IllConditioned { layout: String, cond: f64 },

    #[error("beam {beam} depth becomes negative ({value:.4e} V0) at t = {time:.6} / omega_x")]
    InfeasibleDepth { beam: usize, time: f64, value: f64 },

    #[error("basis inadequate: {0}")]
    BasisInadequate(String),

    #[error("eigensolver failed: {0}")]
    EigenFailure(String),

    #[error("integration failed: norm drift {drift:.3e} exceeds {tolerance:.1e} at step {step}")]
    NormDrift { drift: f64, tolerance: f64, step: usize },

    #[error("COM cutoff population {pop:.3e} exceeds {limit:.1e}")]
    CutoffPopulation { pop: f64, limit: f64 },

    #[error("near-degenerate correction denominators: |w - w'| = {gap:.3e}")]
    Resonance { gap: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

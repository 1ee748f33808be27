//! Crate-wide error type. Variant names mirror the failure modes of the
//! individual subsystems so that reports can name the violated contract.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// W' does not have exactly three roots in (0, 1).
    #[error("RootCountError: W' has {found} roots in (0,1), expected 3")]
    RootCount { found: usize },

    /// The P-balance integral ∫ W'P' dρ between the wells is not zero.
    #[error("BalanceError: |∫ W'P' dρ| = {value:.3e} exceeds tol {tol:.3e}")]
    Balance { value: f64, tol: f64 },

    /// P', B, D or σ fails strict positivity on [0, 1].
    #[error("PositivityError: {what} is non-positive at ρ = {rho} (value {value:.3e})")]
    Positivity {
        what: &'static str,
        rho: f64,
        value: f64,
    },

    /// S_sum does not dominate |W'| = |W̃'/P'|, so B or D would change sign.
    #[error("DominationError: S_sum({rho}) = {s:.3e} <= |W'({rho})| = {wp:.3e}")]
    Domination { rho: f64, s: f64, wp: f64 },

    /// Linearized exponential tail disagrees with the profile quadrature.
    #[error("TailError: tail patch mismatch {mismatch:.3e} at xi = {xi}")]
    Tail { xi: f64, mismatch: f64 },

    /// Grid half-width too small to resolve the requested decay.
    #[error("DomainError: {0}")]
    Domain(String),

    /// Tail samples vanished below the floating-point floor.
    #[error("UnderflowError: {0}")]
    Underflow(String),

    /// Two independent computations of the same scalar disagree.
    #[error("ConsistencyError: {what}: routes give {a:.12e} vs {b:.12e}")]
    Consistency { what: &'static str, a: f64, b: f64 },

    /// Mass coefficient B+D is non-positive somewhere on the grid.
    #[error("SingularityError: B+D = {value:.3e} <= 0 at node {index}")]
    Singularity { index: usize, value: f64 },

    /// Vector length does not match the grid.
    #[error("ShapeError: expected length {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    /// SPD factorization of −L_ū failed (non-positive pivot).
    #[error("FactorizationError: non-positive pivot {pivot:.3e} at row {row}")]
    Factorization { row: usize, pivot: f64 },

    /// The inner corrector integral fails the orthogonality cancellation.
    #[error("QuadratureError: orthogonality defect {defect:.3e} exceeds 1e-8")]
    Quadrature { defect: f64 },

    /// Flow violates the tube / cut-locus condition.
    #[error("CutLocusError: {0}")]
    CutLocus(String),

    /// Spatial grid under-resolves the ε-layer.
    #[error("ResolutionError: {cells:.2} cells per eps-layer, need >= {needed}")]
    Resolution { cells: f64, needed: f64 },

    /// Newton iteration for H_max,ε failed to converge.
    #[error("NewtonDivergence: residual {residual:.3e} after {iterations} iterations")]
    NewtonDivergence { iterations: usize, residual: f64 },

    /// The ansatz left the admissible band (0, 1).
    #[error("RangeError: phi = {value} at grid index {index} leaves (0,1)")]
    Range { index: usize, value: f64 },

    /// Integrand fails the exponential-decay precondition.
    #[error("DecayError: {0}")]
    Decay(String),

    #[error("IOError: {0}")]
    Io(#[from] std::io::Error),

    #[error("JsonError: {0}")]
    Json(#[from] serde_json::Error),

    /// Catch-all for malformed inputs (bad spec kind, empty ladder, ...).
    #[error("InvalidInput: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

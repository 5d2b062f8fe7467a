//! Crate error type.

use thiserror::Error;

/// Errors raised by the simulation and optimization routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A drive amplitude exceeds the device bound; signals an unclamped
    /// optimizer step rather than a physical configuration.
    #[error("drive amplitude {amplitude:.6e} rad/ns exceeds bound {bound:.6e} rad/ns")]
    AmplitudeBound { amplitude: f64, bound: f64 },

    /// Two operators (or an operator and a state) have incompatible shapes.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// A parameter vector has the wrong length for the given cutoff.
    #[error("length mismatch: got {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },

    /// An optimization run stalled: best fidelity improved by less than 1e-12
    /// over 50 consecutive iterations before reaching its tolerance. Callers
    /// restart with a fresh seed.
    #[error("no progress after {iterations} iterations (best infidelity {infidelity:.3e})")]
    NoProgress { iterations: usize, infidelity: f64 },

    /// Transfer-channel burn-in failed to reach stationarity within the
    /// iteration cap (non-mixing channel).
    #[error("transfer channel did not reach a stationary state in {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// Exact diagonalization requested beyond the supported chain length.
    #[error("chain length {got} exceeds exact-diagonalization limit {limit}")]
    SizeExceeded { got: usize, limit: usize },

    /// DMRG failed to converge within the sweep budget.
    #[error("DMRG energy did not converge to {tol:.3e} within {sweeps} sweeps")]
    DmrgNoConvergence { sweeps: usize, tol: f64 },

    /// Isometry columns are not linearly independent to working precision, so
    /// the Gram-Schmidt completion cannot proceed.
    #[error("rank-deficient isometry: column {column} has residual norm {norm:.3e}")]
    RankDeficiency { column: usize, norm: f64 },

    /// Every run in a variational batch failed.
    #[error("all {runs} batch runs failed: {last}")]
    AllRunsFailed { runs: usize, last: String },

    /// A density matrix lost positivity beyond tolerance during a first-order
    /// noisy step; signals a too-coarse time step.
    #[error("density matrix lost positivity: min eigenvalue {min_eigenvalue:.3e}")]
    PositivityLoss { min_eigenvalue: f64 },
}

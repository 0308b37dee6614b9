//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid extent: {0}")]
    InvalidExtent(String),

    #[error("grid memory budget exceeded: {points} points > budget {budget}")]
    BudgetExceeded { points: usize, budget: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("wave function not normalized: |<psi,psi> - 1| = {defect:.3e}")]
    NotNormalized { defect: f64 },

    #[error("spin dimension mismatch: {0}")]
    SpinDimMismatch(String),

    #[error("linear solve diverged: relative residual {residual:.3e} after {iterations} iterations")]
    SolveDiverged { residual: f64, iterations: usize },

    #[error("unstable step: norm drift {drift:.3e} in a single step")]
    UnstableStep { drift: f64 },

    #[error("configuration outside the grid box: axis {axis}, coordinate {coordinate}")]
    OutOfBox { axis: usize, coordinate: f64 },

    #[error("operation requires a scalar wave function, got spin dimension {spin_dim}")]
    SpinorNotSupported { spin_dim: usize },

    #[error("phase unwrap inconsistent: {violations} of {checked} points jump by more than pi between snapshots")]
    UnwrapInconsistent { violations: usize, checked: usize },

    #[error("incompatible time steps: {0}")]
    IncompatibleTimestep(String),

    #[error("experiment spec invalid: {0}")]
    IncompleteSpec(String),

    #[error("branches overlap at readout: cross mass {cross_mass:.3e} exceeds {limit:.3e}")]
    OverlapAtReadout { cross_mass: f64, limit: f64 },

    #[error("initial position lies on the symmetry plane")]
    OnSymmetryPlane,

    #[error("conditional slice norm {norm:.3e} is negligible against maximum slice norm {max:.3e}")]
    NullSlice { norm: f64, max: f64 },

    #[error("no environment bin collected at least {min_count} samples")]
    BinUnderflow { min_count: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown profile builtin `{0}`")]
    UnknownBuiltin(String),
    #[error("diffusivity must be positive, got {value} at cell {index}")]
    NonPositiveDiffusivity { index: usize, value: f64 },

    #[error("eigensolver failed after {iterations} iterations (residual {residual:e})")]
    EigenSolverFailure { iterations: usize, residual: f64 },
    #[error("dispersion curve does not bracket a minimum on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("D-bar must be positive, got {0}")]
    NonPositiveDbar(f64),
    #[error("solvability violated: projected component {component:e} exceeds {tolerance:e}")]
    SolvabilityViolation { component: f64, tolerance: f64 },

    #[error("solution blew up at t={t} (|value| = {value:e})")]
    StabilityBlowup { t: f64, value: f64 },
    #[error("negative undershoot at t={t}: clamped mass {clamped_mass:e} of {total_mass:e}")]
    NegativeDensity { t: f64, clamped_mass: f64, total_mass: f64, clamped_cells: usize },
    #[error("travelling wave relaxation did not converge after {steps} steps (change {change:e})")]
    NoConvergence { steps: usize, change: f64 },
    #[error("sandwich ordering violated at t=1 by {max_violation:e}")]
    OrderingViolatedAtT1 { max_violation: f64 },
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),

    #[error("level {level} not attained at t={t}")]
    LevelNotAttained { t: f64, level: f64 },
    #[error("normal equations are ill conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("requested window [{lo}, {hi}] lies outside the grid")]
    WindowOutsideGrid { lo: f64, hi: f64 },
    #[error("non-positive sample {value:e} at x={x}")]
    NonPositiveSample { x: f64, value: f64 },

    #[error("kernel mass near the boundary is {0:e}; enlarge the domain")]
    DomainTooSmall(f64),
    #[error("solution fell below the positivity floor at x={0}")]
    NonPositive(f64),
    #[error("{0:e} of a norm's mass sits at the truncation boundary")]
    TruncationError(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by grid and field construction, norms, and field I/O.
#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid must have 2 or 3 axes, got {0}")]
    BadDimension(usize),
    #[error("axis {axis}: need at least 4 cells, got {cells}")]
    TooFewCells { axis: usize, cells: usize },
    #[error("axis {axis}: extent must be positive and finite, got {extent}")]
    BadExtent { axis: usize, extent: f64 },
    #[error("L^p norm requires p >= 1 (or infinity), got {0}")]
    InvalidExponent(f64),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("bad field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failures of the time steppers and their linear solves.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("CFL violation: number {number:.4} exceeds limit {limit}")]
    CflViolation { number: f64, limit: f64 },
    #[error("negative density {min:e} after step")]
    NegativeDensity { min: f64 },
    #[error("{system}: linear solve did not converge in {iterations} iterations (residual {residual:e})")]
    LinearSolveFailure {
        system: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Domain errors of the exponent calculators and functionals.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("exponent p = {p} outside admissible range for m = {m}")]
    ExponentOutOfRange { m: f64, p: f64 },
    #[error("diffusion exponent m = {0} outside the admissible range")]
    DiffusionExponent(f64),
}

/// Errors raised while evaluating weak residuals on stored trajectories.
#[derive(Debug, Error)]
pub enum ResidualError {
    #[error("test function support [0, {support_end}] exceeds trajectory end {traj_end}")]
    SupportMismatch { support_end: f64, traj_end: f64 },
    #[error("time {0} is not a snapshot instant")]
    NotASnapshot(f64),
    #[error("test function is not nonnegative")]
    NotNonnegative,
    #[error("test function kind does not match the identity")]
    WrongKind,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Configuration parse and validation failures.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failures of a simulation study; `exit_code` maps them to the CLI codes.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("solver failure at step {step}: {source}")]
    Solver { step: usize, source: SolverError },
    #[error("invariant violated at step {step}: {what}")]
    Invariant { step: usize, what: String, dump: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Residual(#[from] ResidualError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Invariant { .. } => 2,
            RunError::Solver { .. } => 3,
            _ => 1,
        }
    }
}

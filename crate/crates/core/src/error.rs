use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum QgpeError {
    #[error("Sylvester operator is singular: spectra of A and -B overlap (gap {gap:e})")]
    SingularSpectrum { gap: f64 },
    #[error("iterative solve stagnated at relative residual {residual:e} after {iterations} applications")]
    IllConditioned { residual: f64, iterations: usize },
    #[error("time derivative produced a non-finite value")]
    NonFiniteDerivative,
    #[error("gauge transform is singular or too ill-conditioned (condition {condition:e})")]
    SingularGauge { condition: f64 },
    #[error("dominant fixed point is rank deficient (condition {condition:e})")]
    DegenerateFixedPoint { condition: f64 },
    #[error("transfer generator is not injective: leading eigenvalue degenerate within {gap:e}")]
    NonInjective { gap: f64 },
    #[error("density matrix is numerically singular (min eigenvalue {min_eigenvalue:e})")]
    SingularDensity { min_eigenvalue: f64 },
    #[error("tangent vector violates the left gauge condition (|V + R^dag W| = {violation:e})")]
    GaugeFixingViolated { violation: f64 },
    #[error("no convergence after {steps} steps (last residual {residual:e})")]
    NoConvergence { steps: usize, residual: f64 },
    #[error("energy jumped by relative {jump:e} in a single step")]
    StepTooLarge { jump: f64 },
    #[error("state is not stationary: residual {residual:e}")]
    NotStationary { residual: f64 },
    #[error("shifted transfer solve is singular at k = {k}")]
    ShiftSingular { k: f64 },
    #[error("drive is resonant with an excitation (relative residual {residual:e})")]
    Resonance { residual: f64 },
    #[error("problem exceeds desk-scale limits: {0}")]
    ResourceLimit(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, QgpeError>;

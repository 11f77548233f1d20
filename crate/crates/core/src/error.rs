use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("curve is not regular at t = {at}: |c'| = {speed:e}")]
    NonRegularCurve { at: f64, speed: f64 },

    #[error("frame orthonormality defect {defect:e} persists after {refinements} step refinements")]
    FrameDefect { defect: f64, refinements: usize },

    #[error("width {eps} too large for this geometry: rho = {rho} at x = {x}")]
    WidthTooLarge { eps: f64, rho: f64, x: f64 },

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),

    #[error("transverse ground state is degenerate: E0 = {e0}, E1 = {e1}")]
    DegenerateGroundState { e0: f64, e1: f64 },

    #[error("ground state has an interior sign change (min/max = {ratio:e})")]
    NodalGroundState { ratio: f64 },

    #[error("quadrature unresolved: spacing {spacing} exceeds {limit}")]
    Unresolved { spacing: f64, limit: f64 },

    #[error("time step {dt} exceeds the stability bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("non-finite amplitude at step {step}")]
    NonFinite { step: usize },

    #[error("Fock basis dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: u128, cap: usize },

    #[error("assembled operator is not Hermitian: defect {0:e}")]
    NonHermitian(f64),

    #[error("Krylov propagation failed: {0}")]
    Krylov(String),

    #[error("trajectory has {0} frames, at least 3 are needed")]
    TrajectoryTooShort(usize),

    #[error("sequence is not monotone: {0}")]
    NonMonotone(String),

    #[error("identity `{name}` violated: defect {defect:e}")]
    IdentityViolated { name: String, defect: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

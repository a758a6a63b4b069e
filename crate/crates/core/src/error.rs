use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("root finding did not converge after {iterations} iterations for polynomial {coeffs:?}")]
    NumericFailure { coeffs: Vec<f64>, iterations: usize },

    /// `Re(-h s)` above the exponent guard; `exp` would overflow.
    #[error("exp(-h s) out of domain at s = {s}, h = {h}")]
    OutOfDomain { s: Complex64, h: f64 },

    #[error("partial derivative f_s is singular at s = {s}, h = {h}")]
    SingularSensitivity { s: Complex64, h: f64 },

    #[error("b vanishes on the boundary at omega = {omega}")]
    BoundaryPole { omega: f64 },

    #[error("degenerate crossing at omega = {omega}, delay = {delay}: {reason}")]
    DegenerateCrossing { omega: f64, delay: f64, reason: String },

    #[error("defect point at s = {s}, h = {h}")]
    DefectPoint { s: Complex64, h: f64 },

    #[error("contour passes too close to a zero (min |f| = {min_abs_f:e}) after {attempts} attempts")]
    ContourTooClose { min_abs_f: f64, attempts: usize },

    #[error("winding number ambiguous: total/2pi = {winding}")]
    PhaseAmbiguity { winding: f64 },

    #[error("no zero found near seed {seed} at h = {h}")]
    NoZeroNearSeed { seed: Complex64, h: f64 },
}

impl Error {
    /// Whether the error means the argument-principle oracle could not
    /// produce a trustworthy count.
    pub fn is_verification_unavailable(&self) -> bool {
        matches!(
            self,
            Error::ContourTooClose { .. } | Error::PhaseAmbiguity { .. } | Error::OutOfDomain { .. }
        )
    }
}

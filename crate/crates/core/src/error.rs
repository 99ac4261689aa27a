use thiserror::Error;

/// Failures raised by the algebra, the eigenproblem builders and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A quaternion that must be a unit quaternion is not, beyond tolerance.
    #[error("NotUnit: quaternion norm {norm} deviates from 1 by more than {tol:e}")]
    NotUnit { norm: f64, tol: f64 },

    /// A Rodrigues recovery or resolvent inversion hit the 180° singularity.
    #[error("NearSingular: {context} (|value| = {value:e})")]
    NearSingular { context: &'static str, value: f64 },

    #[error("InvalidMeasurement: {0}")]
    InvalidMeasurement(String),

    #[error("NoConvergence: {method} did not converge in {iterations} iterations")]
    NoConvergence { method: &'static str, iterations: usize },

    /// The recursive eigenvalue sequence stopped behaving like a Rayleigh
    /// quotient iteration; the measurements are too noisy for the
    /// perturbation assumption.
    #[error("DivergenceDetected: eigenvalue sequence non-monotone at iteration {iteration}")]
    DivergenceDetected { iteration: usize },

    /// The Neumann update was asked to step outside its convergence region.
    #[error("ConvergenceViolation: |dlambda|·‖D‖_F = {contraction} is not below 1")]
    ConvergenceViolation { contraction: f64 },

    #[error("ConfigError: {0}")]
    ConfigError(String),
}

impl Error {
    /// Short variant name, used on CLI stderr and in comparison rows.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NotUnit { .. } => "NotUnit",
            Error::NearSingular { .. } => "NearSingular",
            Error::InvalidMeasurement(_) => "InvalidMeasurement",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::DivergenceDetected { .. } => "DivergenceDetected",
            Error::ConvergenceViolation { .. } => "ConvergenceViolation",
            Error::ConfigError(_) => "ConfigError",
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NearSingular { .. }
                | Error::NoConvergence { .. }
                | Error::DivergenceDetected { .. }
                | Error::ConvergenceViolation { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

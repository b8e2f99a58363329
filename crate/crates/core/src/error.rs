use thiserror::Error;

/// Errors raised by the constitutive engines, the discrete solvers and the drivers
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-positive jacobian ({0})")]
    NonPositiveJacobian(String),

    #[error("non-positive temperature {0}")]
    NonPositiveTemperature(f64),

    #[error("concentration {value} outside (0,1) in cell {cell}")]
    ConcentrationOutOfRange { cell: usize, value: f64 },

    #[error("newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("local newton iteration did not converge ({0})")]
    LocalNewtonDivergence(String),

    #[error("singular matrix: pivot {pivot:.3e} at dof {dof}")]
    SingularMatrix { dof: usize, pivot: f64 },

    #[error("active set cycling after {0} updates")]
    ActiveSetCycling(usize),

    #[error("time step reduced below the floor {0:.3e}")]
    StepSizeFloor(f64),

    #[error("flow direction undefined for a vanishing driving force")]
    ZeroNormDirection,

    #[error("asymmetric tangent (relative asymmetry {0:.3e})")]
    AsymmetricTangent(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step {step} failed: {source}")]
    Step { step: usize, source: Box<Error> },
}

impl Error {
    /// Wraps the error with the index of the load step in which it occurred
    pub fn at_step(self, step: usize) -> Error {
        Error::Step { step, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

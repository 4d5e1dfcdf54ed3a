use num_complex::Complex64;
use thiserror::Error;

/// Failure modes shared by every stage of the model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("unitary factor at node {node} violates unitarity (residual {residual:.3e})")]
    NotUnitary { node: usize, residual: f64 },

    #[error("coupling constraint `{which}` violated: residual {residual:.3e} above {tolerance:.3e}")]
    ConstraintViolation {
        which: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("structure tensor has an imaginary residue {relative:.3e}")]
    ImaginaryResidue { relative: f64 },

    #[error("structure tensor not positive-definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("pole: z = {z} coincides with quadrature node {node}")]
    Pole { z: Complex64, node: usize },

    #[error("singular wave operator at z = {z} (condition number {condition:.3e})")]
    Singular { z: Complex64, condition: f64 },

    #[error("coupling not invertible at node {node} (singular value ratio {ratio:.3e})")]
    CouplingNotInvertible { node: usize, ratio: f64 },

    #[error("susceptibility not invertible at node {node} (singular value ratio {ratio:.3e})")]
    SusceptibilityNotInvertible { node: usize, ratio: f64 },

    #[error("frequency {omega} lies outside [0, {omega_max}]")]
    Extrapolation { omega: f64, omega_max: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("missing Green function for node {0}")]
    MissingGreen(usize),

    #[error("kernel dump: {0}")]
    Dump(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

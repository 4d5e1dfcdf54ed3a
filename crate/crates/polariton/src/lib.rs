//! Damped-polariton quantization of inhomogeneous, anisotropic dielectrics
//! with spatio-temporal dispersion, realized on a finite periodic lattice.
//!
//! The medium is specified by a single coupling tensor `T(r, r', w)` on a
//! frequency grid. From it the crate builds the susceptibility, the dressed
//! Green function, the kernels of the diagonalizing transformation, the
//! field and noise operators as linear forms over the diagonal modes, and
//! the bath decomposition of the medium. Every operator-algebra identity of
//! the model is exposed as a residual check, and a brute-force quadratic
//! Hamiltonian serves as an independent oracle.
//!
//! Natural units are used: `hbar = eps0 = mu0 = c = 1`. The infinitesimal
//! offsets `+-i0` are replaced by a finite `eta` carried by the grid.

pub mod bath;
pub mod coupling;
pub mod diagonalize;
pub mod dump;
pub mod error;
pub mod fields;
pub mod green;
pub mod lattice;
pub mod oracle;
pub mod susceptibility;

pub use bath::{bath_coefficients, BathCoefficients};
pub use coupling::{
    build_model, builtin_model, check_constraints, coupling_from_lagrangian, momentum_kernel,
    structure_tensor, CouplingTensor, ModelId, ModelParams, RealCoupling, StructureTensor,
};
pub use diagonalize::{mode_coefficients, ModeCoefficients, ModeKernels, Packet};
pub use dump::KernelDump;
pub use error::{Error, Result};
pub use fields::{field_form, FieldKind, LinearBosonicForm};
pub use green::{solve_green, GreenKernel};
pub use lattice::{FrequencyGrid, Lattice, TensorKernel};
pub use oracle::{assemble_hamiltonian, QuadraticHamiltonian};
pub use susceptibility::Susceptibility;

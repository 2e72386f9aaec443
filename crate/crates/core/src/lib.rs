//! Spectral laboratory for non-self-adjoint perturbations of Pauli operators
//! with admissible magnetic fields.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;

pub mod basis;
pub mod detcheck;
pub mod detindex;
pub mod field;
pub mod landau;
pub mod potential;
pub mod profile;
pub mod quad;
pub mod spec2d;
pub mod spec3d;
pub mod special;
pub mod toeplitz;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub use basis::{build_zero_modes, ZeroModeBasis};
pub use detindex::{Contour, OperatorFamily};
pub use field::{make_constant_field, make_radial_field, AdmissibleField};
pub use potential::{MatrixPotential, PotentialShape};
pub use profile::Profile;
pub use toeplitz::{CountingCurve, Symbol, ToeplitzOperator};

/// Matrix type used for operator families.
pub type CMatrix = nalgebra::DMatrix<Complex64>;

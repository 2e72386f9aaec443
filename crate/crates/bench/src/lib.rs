//! Fixtures shared by the benchmarks.

use paulispec::spec2d::{Model2DOptions, Pauli2DModel};
use paulispec::spec3d::{Model3DOptions, Pauli3DModel};
use paulispec::{make_constant_field, CMatrix, Complex64, MatrixPotential, PotentialShape, Profile};

fn gaussian_shape() -> PotentialShape {
    PotentialShape::diagonal(Profile::gaussian(1.0, 1.0), Profile::Zero)
}

/// Constant unit field with W = diag(e^{-r²}, 0).
pub fn model_2d(eta: Complex64, eps: f64, k_count: usize) -> Pauli2DModel {
    let pot = MatrixPotential::new(eta, eps, gaussian_shape(), None).expect("valid potential");
    let opts = Model2DOptions { k_count, ..Model2DOptions::default() };
    Pauli2DModel::new(make_constant_field(1.0).expect("valid field"), pot, opts).expect("2D model")
}

/// Separable Gaussian model on a reduced longitudinal grid.
pub fn model_3d(eta: Complex64, eps: f64, k_count: usize) -> Pauli3DModel {
    let pot = MatrixPotential::new(eta, eps, gaussian_shape(), Some(Profile::gaussian(1.0, 1.0))).expect("valid potential");
    let opts = Model3DOptions { k_count, levels: 4, n_par: 129, m_x: 8, ..Model3DOptions::default() };
    Pauli3DModel::new(make_constant_field(1.0).expect("valid field"), pot, opts).expect("3D model")
}

/// Deterministic dense matrix with entries of size about `scale`.
pub fn test_matrix(n: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| {
        let t = (7 * i + 13 * j + 1) as f64;
        Complex64::new((t * 0.618).sin(), (t * 0.414).cos()) * scale
    })
}

//! Landau levels of the constant-field Pauli operator restricted to one
//! angular sector, and Galerkin matrices of radial potentials in that sector.
//!
//! Sector ℓ ≥ 0 holds the radial functions
//! g_n(u) = sqrt(n!/Γ(n+ℓ+1)) u^{ℓ/2} e^{-u/2} L_n^ℓ(u), u = b0 r²/2,
//! orthonormal in du. Spin-down level n has energy 2 b0 n, spin-up level n
//! has energy 2 b0 (n+1). Basis index is `component * levels + n`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::potential::{abs_hermitian, PotentialShape, M2};
use crate::quad::{gamma_window, Rule};
use crate::special::{laguerre_all, ln_gamma};
use crate::{CMatrix, Error, Result};

const MARGIN: f64 = 80.0;

#[derive(Debug, Clone)]
pub struct SectorBasis {
    pub ell: usize,
    pub levels: usize,
    pub b0: f64,
    pub u: Vec<f64>,
    pub weights: Vec<f64>,
    /// g_n(u_q), levels × nodes.
    pub radial: DMatrix<f64>,
}

impl SectorBasis {
    pub fn new(b0: f64, ell: usize, levels: usize, break_radii: &[f64], order: usize) -> Result<Self> {
        if !(b0 > 0.0) || levels == 0 {
            return Err(Error::InvalidInput("sector basis needs b0 > 0 and at least one level".into()));
        }
        let a = ell as f64;
        // the polynomial part widens the window by roughly its degree
        let (lo, hi0) = gamma_window(a, 1.0, MARGIN);
        let hi = hi0 + 4.0 * levels as f64 + 8.0 * (a + 1.0).sqrt();
        let panels = 4 + levels + ((hi - lo) / (4.0 + (a + 1.0).sqrt())).ceil() as usize;
        let breaks: Vec<f64> = break_radii.iter().map(|r| 0.5 * b0 * r * r).collect();
        let rule = Rule::panels(lo, hi, panels, order, &breaks);
        let mut radial = DMatrix::zeros(levels, rule.len());
        for (q, &u) in rule.nodes.iter().enumerate() {
            let lag = laguerre_all(levels, a, u);
            for n in 0..levels {
                let ln_pref = 0.5 * (ln_gamma(n as f64 + 1.0) - ln_gamma(n as f64 + a + 1.0) + a * u.ln() - u);
                radial[(n, q)] = ln_pref.exp() * lag[n];
            }
        }
        Ok(Self { ell, levels, b0, u: rule.nodes, weights: rule.weights, radial })
    }

    pub fn dim(&self) -> usize {
        2 * self.levels
    }

    pub fn radius(&self, q: usize) -> f64 {
        (2.0 * self.u[q] / self.b0).sqrt()
    }

    /// Unperturbed energies in basis order.
    pub fn energies(&self) -> Vec<f64> {
        let down = (0..self.levels).map(|n| 2.0 * self.b0 * n as f64);
        let up = (0..self.levels).map(|n| 2.0 * self.b0 * (n + 1) as f64);
        down.chain(up).collect()
    }

    /// Index of the zero mode of the sector.
    pub fn lowest_index(&self) -> usize {
        0
    }

    /// ∫ g_n g_m f(r) du.
    pub fn galerkin_scalar(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let l = self.levels;
        let mut out = DMatrix::zeros(l, l);
        for q in 0..self.u.len() {
            let w = self.weights[q] * f(self.radius(q));
            if w == 0.0 {
                continue;
            }
            for n in 0..l {
                let gn = self.radial[(n, q)] * w;
                for m in 0..=n {
                    out[(n, m)] += gn * self.radial[(m, q)];
                }
            }
        }
        for n in 0..l {
            for m in 0..n {
                out[(m, n)] = out[(n, m)];
            }
        }
        out
    }

    fn galerkin_matrix_field(&self, at: impl Fn(f64) -> M2) -> CMatrix {
        let l = self.levels;
        let mut out = CMatrix::zeros(2 * l, 2 * l);
        for q in 0..self.u.len() {
            let m = at(self.radius(q));
            for c in 0..2 {
                for d in 0..2 {
                    let v = m[(c, d)] * self.weights[q];
                    if v.norm() == 0.0 {
                        continue;
                    }
                    for n in 0..l {
                        let gn = self.radial[(n, q)];
                        for k in 0..l {
                            out[(c * l + n, d * l + k)] += v * (gn * self.radial[(k, q)]);
                        }
                    }
                }
            }
        }
        out
    }

    /// Galerkin matrix of W(r).
    pub fn galerkin_shape(&self, shape: &PotentialShape) -> CMatrix {
        self.galerkin_matrix_field(|r| shape.at(r))
    }

    /// Galerkin matrix of the pointwise modulus |W(r)|.
    pub fn galerkin_abs_shape(&self, shape: &PotentialShape) -> CMatrix {
        self.galerkin_matrix_field(|r| abs_hermitian(&shape.at(r)))
    }

    /// Largest deviation of the discrete Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.galerkin_scalar(|_| 1.0);
        (g - DMatrix::identity(self.levels, self.levels)).abs().max()
    }
}

/// Factorization of the weighted space: Galerkin |W| = U Σ² U*, truncated,
/// and the sign part J_R = Σ^{-1} U* W U Σ^{-1}.
#[derive(Debug, Clone)]
pub struct WeightedFactor {
    /// U Σ, basis × rank.
    pub u_sigma: CMatrix,
    pub sign: CMatrix,
}

impl WeightedFactor {
    pub fn new(w: &CMatrix, w_abs: &CMatrix, rel_cut: f64) -> Result<Self> {
        let n = w.nrows();
        let herm = (w_abs + w_abs.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::try_new(herm, 1e-15, 100_000)
            .ok_or_else(|| Error::LinearAlgebra("Hermitian eigensolver did not converge".into()))?;
        let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..n).filter(|&i| top > 0.0 && eig.eigenvalues[i] > rel_cut * top).collect();
        let r = keep.len();
        let mut u_sigma = CMatrix::zeros(n, r);
        let mut u_inv = CMatrix::zeros(n, r);
        for (c, &i) in keep.iter().enumerate() {
            let s = eig.eigenvalues[i].sqrt();
            for row in 0..n {
                u_sigma[(row, c)] = eig.eigenvectors[(row, i)] * s;
                u_inv[(row, c)] = eig.eigenvectors[(row, i)] / s;
            }
        }
        let sign = u_inv.adjoint() * w * &u_inv;
        Ok(Self { u_sigma, sign })
    }

    pub fn rank(&self) -> usize {
        self.u_sigma.ncols()
    }

    /// Σ U* e_i e_j* U Σ as a rank × rank matrix.
    pub fn outer(&self, i: usize, j: usize) -> CMatrix {
        let a = self.u_sigma.row(i).adjoint();
        let b = self.u_sigma.row(j);
        &a * b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::Profile;

    #[test]
    fn radial_functions_are_orthonormal() {
        for &ell in &[0usize, 3, 25, 60] {
            let s = SectorBasis::new(1.0, ell, 12, &[], 24).unwrap();
            assert!(s.orthonormality_error() < 1e-12, "ell = {ell}: {}", s.orthonormality_error());
        }
    }

    #[test]
    fn gaussian_lowest_level_matches_toeplitz_value() {
        // <g_0, e^{-r²} g_0> = (1/3)^{ell+1}·3 ... in u: e^{-2u}, ∫ u^ℓ e^{-3u}/ℓ! = 3^{-(ℓ+1)}
        for &ell in &[0usize, 5, 30] {
            let s = SectorBasis::new(1.0, ell, 4, &[], 24).unwrap();
            let g = s.galerkin_scalar(|r| (-r * r).exp());
            let expect = 3f64.powi(-(ell as i32 + 1));
            assert!((g[(0, 0)] / expect - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_factor_reproduces_matrix() {
        let shape = PotentialShape::diagonal(Profile::gaussian(1.0, 1.0), Profile::gaussian(-0.5, 2.0));
        let s = SectorBasis::new(1.0, 2, 6, &[], 24).unwrap();
        let w = s.galerkin_shape(&shape);
        let wa = s.galerkin_abs_shape(&shape);
        let f = WeightedFactor::new(&w, &wa, 1e-14).unwrap();
        let back = &f.u_sigma * &f.sign * f.u_sigma.adjoint();
        assert!((back - &w).norm() < 1e-12 * w.norm());
        assert_eq!(f.rank(), 12);
        let one_sided = PotentialShape::diagonal(Profile::gaussian(1.0, 1.0), Profile::Zero);
        let w1 = s.galerkin_shape(&one_sided);
        let f1 = WeightedFactor::new(&w1, &s.galerkin_abs_shape(&one_sided), 1e-14).unwrap();
        assert_eq!(f1.rank(), 6);
        // Σ^{-1} on both sides amplifies rounding by the squared condition of UΣ
        let sv = f1.u_sigma.singular_values();
        let tol = 100.0 * f64::EPSILON * (sv.max() / sv.min()).powi(2);
        let dev = (f1.sign.clone() - CMatrix::identity(6, 6)).norm();
        assert!(dev < tol, "{dev:e} vs {tol:e}");
    }
}

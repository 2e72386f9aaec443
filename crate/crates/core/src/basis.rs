//! Normalized zero modes ψ_k ∝ z^k e^{-φ} of the spin-down component.

use num_complex::Complex64;
use serde::Serialize;

use crate::field::AdmissibleField;
use crate::quad::{gamma_window, log_sum_exp, Rule};
use crate::{Error, Result};

/// Log-density margin kept by quadrature windows.
const WINDOW_MARGIN: f64 = 80.0;

#[derive(Debug, Clone, Serialize)]
pub struct ZeroModeBasis {
    pub field: AdmissibleField,
    pub k_count: usize,
    pub quad_order: usize,
    /// ln ‖z^k e^{-φ}‖², k = 0..K-1.
    pub log_norm_sq: Vec<f64>,
}

/// Quadrature nodes in u = r² with weights carrying |ψ_k|².
#[derive(Debug, Clone)]
pub struct ModeRule {
    pub u: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ModeRule {
    /// ⟨ψ_k, U ψ_k⟩ for a radial function given in terms of r.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.u.iter().zip(&self.weights).map(|(&u, &w)| w * f(u.sqrt())).sum()
    }
}

pub fn build_zero_modes(field: &AdmissibleField, k_count: usize, quad_order: usize) -> Result<ZeroModeBasis> {
    if k_count == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    if quad_order < 8 {
        return Err(Error::InvalidInput("quad_order must be at least 8".into()));
    }
    let mut basis = ZeroModeBasis { field: field.clone(), k_count, quad_order, log_norm_sq: Vec::with_capacity(k_count) };
    for k in 0..k_count {
        let coarse = basis.log_norm_sq_with(k, quad_order);
        let fine = basis.log_norm_sq_with(k, 2 * quad_order);
        let change = (coarse - fine).exp_m1().abs();
        if !(change <= 1e-10) {
            return Err(Error::Quadrature(format!(
                "norm of mode k = {k} not converged (relative change {change:.2e} when doubling the order)"
            )));
        }
        basis.log_norm_sq.push(fine);
    }
    Ok(basis)
}

impl ZeroModeBasis {
    /// Window in u = r² holding the mass of |ψ_k|².
    pub fn window(&self, k: usize) -> (f64, f64) {
        let f = &self.field;
        gamma_window(k as f64, f.b0 / 2.0, WINDOW_MARGIN + 2.0 * f.osc)
    }

    fn log_density_unnormalized(&self, k: usize, u: f64) -> f64 {
        let r = u.sqrt();
        let phi = self.field.b0 * u / 4.0 + self.field.phi_tilde_at(r);
        let lu = if k == 0 { 0.0 } else { k as f64 * u.ln() };
        lu - 2.0 * phi + std::f64::consts::PI.ln()
    }

    fn log_norm_sq_with(&self, k: usize, order: usize) -> f64 {
        let (lo, hi) = self.window(k);
        let rule = Rule::composite(&[lo, hi], order);
        log_sum_exp(rule.nodes.iter().zip(&rule.weights).map(|(&u, &w)| w.ln() + self.log_density_unnormalized(k, u)))
    }

    pub fn norms(&self) -> Vec<f64> {
        self.log_norm_sq.iter().map(|l| (0.5 * l).exp()).collect()
    }

    pub fn log_norm(&self, k: usize) -> f64 {
        0.5 * self.log_norm_sq[k]
    }

    /// Quadrature for ∫|ψ_k|² f, with extra panel boundaries at the given radii.
    pub fn mode_rule(&self, k: usize, break_radii: &[f64]) -> ModeRule {
        let (lo, hi) = self.window(k);
        let breaks: Vec<f64> = break_radii.iter().map(|r| r * r).collect();
        let rule = Rule::panels(lo, hi, 1, self.quad_order, &breaks);
        let ln = self.log_norm_sq[k];
        let weights =
            rule.nodes.iter().zip(&rule.weights).map(|(&u, &w)| w * (self.log_density_unnormalized(k, u) - ln).exp()).collect();
        ModeRule { u: rule.nodes, weights }
    }

    /// ψ_k at the point (x, y).
    pub fn mode_value(&self, k: usize, x: f64, y: f64) -> Complex64 {
        let r2 = x * x + y * y;
        let r = r2.sqrt();
        let phi = self.field.b0 * r2 / 4.0 + self.field.phi_tilde_at(r);
        if r == 0.0 {
            return if k == 0 { Complex64::new((-phi - self.log_norm(0)).exp(), 0.0) } else { Complex64::new(0.0, 0.0) };
        }
        let modulus = (k as f64 * r.ln() - phi - self.log_norm(k)).exp();
        Complex64::from_polar(modulus, k as f64 * y.atan2(x))
    }

    /// Truncated kernel Σ_{k<K} ψ_k(z) conj(ψ_k(w)) of the projection.
    pub fn projection_kernel_sum(&self, z: [f64; 2], w: [f64; 2]) -> Complex64 {
        (0..self.k_count).map(|k| self.mode_value(k, z[0], z[1]) * self.mode_value(k, w[0], w[1]).conj()).sum()
    }
}

/// Closed-form kernel of the projection onto the zero modes, constant field only.
pub fn projection_kernel_constant(field: &AdmissibleField, z: [f64; 2], w: [f64; 2]) -> Result<Complex64> {
    if !field.is_constant() {
        return Err(Error::InvalidInput("closed-form projection kernel needs a constant field; use the basis sum".into()));
    }
    let b0 = field.b0;
    let zc = Complex64::new(z[0], z[1]);
    let wc = Complex64::new(w[0], w[1]);
    let expo = -b0 / 4.0 * (zc.norm_sqr() + wc.norm_sqr()) + b0 / 2.0 * zc * wc.conj();
    Ok(b0 / (2.0 * std::f64::consts::PI) * expo.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_constant_field, make_radial_field};
    use crate::profile::Profile;
    use std::f64::consts::PI;

    #[test]
    fn constant_field_norms() {
        let f = make_constant_field(1.0).unwrap();
        let b = build_zero_modes(&f, 4, 256).unwrap();
        let n = b.norms();
        assert!((n[0] * n[0] - 2.0 * PI).abs() < 1e-12);
        assert!((n[1] * n[1] - 4.0 * PI).abs() < 1e-12);
        // π k! 2^{k+1}
        assert!((n[3] * n[3] - PI * 6.0 * 16.0).abs() < 1e-10);
    }

    #[test]
    fn large_k_norms_in_log_space() {
        let f = make_constant_field(1.0).unwrap();
        let b = build_zero_modes(&f, 400, 256).unwrap();
        let k = 399.0;
        let exact = PI.ln() + crate::special::ln_gamma(k + 1.0) + (k + 1.0) * 2f64.ln();
        assert!((b.log_norm_sq[399] - exact).abs() < 1e-10 * exact.abs());
    }

    #[test]
    fn mode_rules_are_normalized() {
        let f = make_radial_field(1.0, Profile::gaussian(0.6, 1.0)).unwrap();
        let b = build_zero_modes(&f, 12, 256).unwrap();
        for k in 0..12 {
            let rule = b.mode_rule(k, &[1.0]);
            assert!((rule.expectation(|_| 1.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_diagonal_and_sum() {
        let f = make_constant_field(1.0).unwrap();
        let v = projection_kernel_constant(&f, [0.0, 0.0], [0.0, 0.0]).unwrap();
        assert!((v.re - 1.0 / (2.0 * PI)).abs() < 1e-15 && v.im == 0.0);
        let d = projection_kernel_constant(&f, [1.3, -0.4], [1.3, -0.4]).unwrap();
        assert!((d.re - 1.0 / (2.0 * PI)).abs() < 1e-15 && d.im.abs() < 1e-15);
        let b = build_zero_modes(&f, 40, 256).unwrap();
        let s = b.projection_kernel_sum([1.0, 0.0], [0.0, 1.0]);
        let c = projection_kernel_constant(&f, [1.0, 0.0], [0.0, 1.0]).unwrap();
        assert!((s - c).norm() < 1e-10);
        let g = make_radial_field(1.0, Profile::gaussian(1.0, 1.0)).unwrap();
        assert!(projection_kernel_constant(&g, [0.0, 0.0], [0.0, 0.0]).is_err());
    }
}

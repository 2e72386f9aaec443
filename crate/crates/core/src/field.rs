//! Admissible magnetic fields b = b0 + Δφ̃ with a radial perturbation potential.

use serde::Serialize;

use crate::profile::Profile;
use crate::quad::gauss_legendre;
use crate::{Error, Result};

/// Number of samples used to scan sampled profiles.
pub const PROFILE_SAMPLES: usize = 4096;

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibleField {
    pub b0: f64,
    pub phi_tilde: Profile,
    /// sup φ̃ - inf φ̃ over the scanned range.
    pub osc: f64,
    /// Gap constant 2 b0 exp(-2 osc).
    pub zeta: f64,
    pub inf_phi_tilde: f64,
    /// Radius of the scanned range, 20 / sqrt(b0).
    pub r_max: f64,
}

pub fn make_constant_field(b0: f64) -> Result<AdmissibleField> {
    make_radial_field(b0, Profile::Zero)
}

pub fn make_radial_field(b0: f64, phi_tilde: Profile) -> Result<AdmissibleField> {
    if !(b0 > 0.0 && b0.is_finite()) {
        return Err(Error::InvalidInput(format!("b0 must be positive, got {b0}")));
    }
    let r_max = 20.0 / b0.sqrt();
    let mut sup = f64::NEG_INFINITY;
    let mut inf = f64::INFINITY;
    for i in 0..PROFILE_SAMPLES {
        let r = r_max * i as f64 / (PROFILE_SAMPLES - 1) as f64;
        let (v, d1, d2) = phi_tilde.eval3(r);
        if !(v.is_finite() && d1.is_finite() && d2.is_finite()) {
            return Err(Error::InvalidInput(format!("profile {phi_tilde} is not finite at r = {r}")));
        }
        sup = sup.max(v);
        inf = inf.min(v);
    }
    let osc = sup - inf;
    // Growth at the edge of the scanned range means the profile is not bounded.
    let tol = 1e-6 * osc.max(1.0);
    let tail = phi_tilde.value(r_max) - phi_tilde.value(0.9 * r_max);
    let (_, slope, _) = phi_tilde.eval3(r_max);
    if tail.abs() > tol || (slope * r_max).abs() > tol {
        return Err(Error::InvalidInput(format!(
            "profile {phi_tilde} is unbounded: still varying at r = {r_max:.3} (change {tail:.3e})"
        )));
    }
    Ok(AdmissibleField { b0, zeta: 2.0 * b0 * (-2.0 * osc).exp(), osc, inf_phi_tilde: inf, r_max, phi_tilde })
}

impl AdmissibleField {
    pub fn is_constant(&self) -> bool {
        self.osc == 0.0 && matches!(self.phi_tilde, Profile::Zero | Profile::Constant(_))
    }

    /// φ(r) = b0 r²/4 + φ̃(r).
    pub fn total_phi(&self, r: f64) -> Result<f64> {
        if r < 0.0 {
            return Err(Error::InvalidInput(format!("radius must be nonnegative, got {r}")));
        }
        Ok(self.b0 * r * r / 4.0 + self.phi_tilde.value(r))
    }

    /// φ̃(r) without the range check.
    pub fn phi_tilde_at(&self, r: f64) -> f64 {
        self.phi_tilde.value(r)
    }

    /// Radial derivative of the total potential φ.
    pub fn dphi(&self, r: f64) -> f64 {
        self.b0 * r / 2.0 + self.phi_tilde.eval3(r).1
    }

    /// b̃ = Δφ̃ for radial φ̃.
    pub fn b_tilde(&self, r: f64) -> f64 {
        let (_, d1, d2) = self.phi_tilde.eval3(r);
        if r < 1e-8 {
            2.0 * d2
        } else {
            d2 + d1 / r
        }
    }

    pub fn b(&self, r: f64) -> f64 {
        self.b0 + self.b_tilde(r)
    }

    /// Re-solve φ̂'(r) = (1/r) ∫₀^r s b̃(s) ds, integrate, and compare with
    /// φ̃ - φ̃(0) on the sampling grid. Returns the maximum deviation.
    pub fn poisson_roundtrip_error(&self) -> f64 {
        let gl = gauss_legendre(12);
        let n = PROFILE_SAMPLES;
        let h = self.r_max / (n - 1) as f64;
        let sb = |s: f64| s * self.b_tilde(s);
        // flux(r) = ∫₀^r s b̃(s) ds on a panel-local basis
        let flux_piece = |a: f64, b: f64| -> f64 {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            gl.nodes.iter().zip(&gl.weights).map(|(x, w)| half * w * sb(mid + half * x)).sum()
        };
        let phi0 = self.phi_tilde.value(0.0);
        let mut flux_left = 0.0;
        let mut phi_hat = 0.0;
        let mut worst: f64 = 0.0;
        for i in 0..n - 1 {
            let a = i as f64 * h;
            let b = a + h;
            let half = 0.5 * h;
            let mid = a + half;
            let mut piece = 0.0;
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                let t = mid + half * x;
                let flux = flux_left + flux_piece(a, t);
                piece += half * w * flux / t;
            }
            phi_hat += piece;
            flux_left += flux_piece(a, b);
            let err = (phi_hat - (self.phi_tilde.value(b) - phi0)).abs();
            worst = worst.max(err);
        }
        worst
    }
}

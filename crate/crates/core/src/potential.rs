//! 2x2 matrix potentials V = ε η W, pointwise polar data and the scalar
//! reductions |V|₁₁ and 𝐕₁₁.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::profile::{CubicSpline, Profile};
use crate::quad;
use crate::{Error, Result};

pub type M2 = Matrix2<Complex64>;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

/// Eigenvalues (ascending) and orthonormal eigenvectors of a 2x2 Hermitian matrix.
pub fn herm2_eig(a: &M2) -> ([f64; 2], [Vector2<Complex64>; 2]) {
    let p = a[(0, 0)].re;
    let d = a[(1, 1)].re;
    let b = 0.5 * (a[(0, 1)] + a[(1, 0)].conj());
    let half = 0.5 * (p - d);
    let rad = (half * half + b.norm_sqr()).sqrt();
    let mean = 0.5 * (p + d);
    let lams = [mean - rad, mean + rad];
    if b.norm() <= 1e-300 || rad == 0.0 {
        let e0 = Vector2::new(C1, C0);
        let e1 = Vector2::new(C0, C1);
        return if p <= d { ([p, d], [e0, e1]) } else { ([d, p], [e1, e0]) };
    }
    let vecs = lams.map(|l| {
        let v1 = Vector2::new(b, Complex64::new(l - p, 0.0));
        let v2 = Vector2::new(Complex64::new(l - d, 0.0), b.conj());
        let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
        v / Complex64::new(v.norm(), 0.0)
    });
    (lams, vecs)
}

fn outer(v: &Vector2<Complex64>) -> M2 {
    v * v.adjoint()
}

/// Square root of a 2x2 positive semidefinite Hermitian matrix (closed form).
pub fn sqrt_psd2(a: &M2) -> M2 {
    let tr = a[(0, 0)].re + a[(1, 1)].re;
    if tr <= 0.0 {
        return M2::zeros();
    }
    let det = (a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]).re.max(0.0);
    let s = det.sqrt();
    let t = (tr + 2.0 * s).sqrt();
    (a + M2::identity() * Complex64::new(s, 0.0)) / Complex64::new(t, 0.0)
}

/// Polar decomposition M = J̃ |M| with |M| = (M* M)^{1/2} and J̃ = M |M|⁺.
pub fn polar_decompose_point(m: &M2) -> (M2, M2) {
    let mm = m.adjoint() * m;
    let abs = sqrt_psd2(&mm);
    let (lams, vecs) = herm2_eig(&abs);
    let top = lams[1].abs().max(lams[0].abs());
    let mut pinv = M2::zeros();
    for (l, v) in lams.iter().zip(&vecs) {
        if *l > 1e-14 * top && *l > 0.0 {
            pinv += outer(v) / Complex64::new(*l, 0.0);
        }
    }
    (abs, m * pinv)
}

/// Matrix sign of a Hermitian matrix; zero eigenvalues give a zero block.
pub fn sign_matrix_point(w: &M2) -> M2 {
    let (lams, vecs) = herm2_eig(w);
    let top = lams[0].abs().max(lams[1].abs());
    let mut j = M2::zeros();
    for (l, v) in lams.iter().zip(&vecs) {
        if l.abs() > 1e-14 * top {
            j += outer(v) * Complex64::new(l.signum(), 0.0);
        }
    }
    j
}

/// |W| for Hermitian W.
pub fn abs_hermitian(w: &M2) -> M2 {
    let (lams, vecs) = herm2_eig(w);
    outer(&vecs[0]) * Complex64::new(lams[0].abs(), 0.0) + outer(&vecs[1]) * Complex64::new(lams[1].abs(), 0.0)
}

/// Transverse shape W⊥ of the potential; radial in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialShape {
    /// diag(w1(r), w2(r))
    Diagonal { w1: Profile, w2: Profile },
    /// M0 · w(r) with M0 Hermitian, given row-major as [re, im] pairs.
    Matrix { m0: [[[f64; 2]; 2]; 2], w: Profile },
}

impl PotentialShape {
    pub fn diagonal(w1: Profile, w2: Profile) -> Self {
        PotentialShape::Diagonal { w1, w2 }
    }

    fn m0(&self) -> Option<M2> {
        match self {
            PotentialShape::Matrix { m0, .. } => Some(M2::from_fn(|i, j| Complex64::new(m0[i][j][0], m0[i][j][1]))),
            _ => None,
        }
    }

    pub fn at(&self, r: f64) -> M2 {
        match self {
            PotentialShape::Diagonal { w1, w2 } => {
                M2::new(Complex64::new(w1.value(r), 0.0), C0, C0, Complex64::new(w2.value(r), 0.0))
            }
            PotentialShape::Matrix { w, .. } => self.m0().expect("matrix family") * Complex64::new(w.value(r), 0.0),
        }
    }

    fn profiles(&self) -> Vec<&Profile> {
        match self {
            PotentialShape::Diagonal { w1, w2 } => vec![w1, w2],
            PotentialShape::Matrix { w, .. } => vec![w],
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.profiles().iter().flat_map(|p| p.breakpoints()).collect()
    }

    pub fn is_zero(&self) -> bool {
        match self {
            PotentialShape::Diagonal { w1, w2 } => w1.is_zero() && w2.is_zero(),
            PotentialShape::Matrix { w, .. } => w.is_zero() || self.m0().is_some_and(|m| m.norm() == 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPotential {
    pub eta: Complex64,
    /// Overall coupling ε in V = ε η W.
    pub coupling: f64,
    pub shape: PotentialShape,
    /// Longitudinal factor g(X∥) of a separable 3D potential.
    pub longitudinal: Option<Profile>,
}

impl MatrixPotential {
    pub fn new(eta: Complex64, coupling: f64, shape: PotentialShape, longitudinal: Option<Profile>) -> Result<Self> {
        let p = Self { eta, coupling, shape, longitudinal };
        p.validate()?;
        Ok(p)
    }

    /// Potential from η given as modulus and argument.
    pub fn polar_eta(modulus: f64, arg: f64) -> Complex64 {
        Complex64::from_polar(modulus, arg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta.norm() == 0.0 || !self.eta.norm().is_finite() {
            return Err(Error::InvalidInput("eta must be nonzero".into()));
        }
        if !(self.coupling >= 0.0 && self.coupling.is_finite()) {
            return Err(Error::InvalidInput("coupling must be finite and nonnegative".into()));
        }
        if let Some(m0) = self.shape.m0() {
            if (m0 - m0.adjoint()).norm() > 1e-13 {
                return Err(Error::InvalidInput("M0 must be Hermitian".into()));
            }
        }
        for i in 0..64 {
            let r = 0.25 * i as f64;
            let w = self.shape.at(r);
            if (w - w.adjoint()).norm() >= 1e-13 || !w.norm().is_finite() {
                return Err(Error::InvalidInput(format!("W is not Hermitian or not finite at r = {r}")));
            }
        }
        if let Some(g) = &self.longitudinal {
            for i in 0..64 {
                let x = 0.25 * i as f64;
                if g.value(x) < 0.0 {
                    return Err(Error::InvalidInput("longitudinal factor must be nonnegative".into()));
                }
            }
            if self.longitudinal_decay_exponent() <= 1.0 {
                return Err(Error::InvalidInput("longitudinal factor decays too slowly; its integral diverges".into()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        if self.longitudinal.is_some() {
            3
        } else {
            2
        }
    }

    pub fn g(&self, x: f64) -> f64 {
        self.longitudinal.as_ref().map_or(1.0, |g| g.value(x.abs()))
    }

    /// W at a point; the third coordinate is ignored in 2D.
    pub fn w_at(&self, x: f64, y: f64, x_par: f64) -> M2 {
        let r = (x * x + y * y).sqrt();
        self.shape.at(r) * Complex64::new(self.g(x_par), 0.0)
    }

    /// V = ε η W at a point.
    pub fn v_at(&self, x: f64, y: f64, x_par: f64) -> M2 {
        self.w_at(x, y, x_par) * (self.eta * self.coupling)
    }

    /// |V|₁₁ at a point from the pointwise polar decomposition.
    pub fn abs_v11_at(&self, x: f64, y: f64, x_par: f64) -> f64 {
        polar_decompose_point(&self.v_at(x, y, x_par)).0[(0, 0)].re
    }

    /// Estimated m in g ≲ ⟨X⟩^{-m}, from the log-slope at large X.
    pub fn longitudinal_decay_exponent(&self) -> f64 {
        let Some(g) = &self.longitudinal else { return f64::INFINITY };
        let (x1, x2) = (20.0f64, 40.0f64);
        let (g1, g2) = (g.value(x1), g.value(x2));
        if g2 <= 0.0 || g1 <= 0.0 {
            return f64::INFINITY;
        }
        let br = |x: f64| (1.0 + x * x).sqrt().ln();
        -(g2.ln() - g1.ln()) / (br(x2) - br(x1))
    }

    /// ½ ∫ g(X∥) dX∥.
    pub fn half_integral_g(&self) -> Result<f64> {
        let Some(g) = &self.longitudinal else {
            return Err(Error::InvalidInput("potential is two-dimensional".into()));
        };
        let breaks = g.breakpoints();
        if let Some(&b) = breaks.first() {
            let inner = quad::adaptive(|t| g.value(t), 0.0, b, 1e-13, 0.0)?;
            let outer = quad::adaptive_semi_infinite(|t| g.value(t), b, 1e-13, 0.0)?;
            return Ok(inner + outer);
        }
        Ok(0.5 * quad::adaptive_real_line(|t| g.value(t.abs()), 1e-13, 0.0)?)
    }

    /// W(r) positive semidefinite at radial samples.
    pub fn is_nonnegative(&self) -> bool {
        (0..2000).all(|i| herm2_eig(&self.shape.at(0.01 * i as f64)).0[0] >= -1e-14)
    }

    /// ‖V‖_∞ over radial samples (operator norm of the 2x2 matrices).
    pub fn sup_norm(&self) -> f64 {
        let gmax = match &self.longitudinal {
            Some(g) => (0..400).map(|i| g.value(0.05 * i as f64)).fold(0.0, f64::max),
            None => 1.0,
        };
        let mut wmax: f64 = 0.0;
        for i in 0..2000 {
            let (l, _) = herm2_eig(&self.shape.at(0.01 * i as f64));
            wmax = wmax.max(l[0].abs()).max(l[1].abs());
        }
        self.coupling * self.eta.norm() * wmax * gmax
    }

    /// Radial profile of |W⊥|₁₁ (no ε, η).
    pub fn abs_w11_profile(&self) -> Result<Profile> {
        match &self.shape {
            PotentialShape::Diagonal { w1, .. } => abs_profile(w1),
            PotentialShape::Matrix { w, .. } => {
                let m0 = self.shape.m0().expect("matrix family");
                let a = abs_hermitian(&m0)[(0, 0)].re;
                Ok(scale_profile(&abs_profile(w)?, a))
            }
        }
    }

    /// 2D: radial profile of |V|₁₁ = ε |η| |W|₁₁.
    pub fn abs_v11_profile(&self) -> Result<Profile> {
        Ok(scale_profile(&self.abs_w11_profile()?, self.coupling * self.eta.norm()))
    }

    /// 3D: 𝐕₁₁ = ½ ∫ |V|₁₁ dX∥ as a radial profile (separable closed form).
    pub fn reduce_v11_3d(&self) -> Result<Profile> {
        if self.dim() != 3 {
            return Err(Error::InvalidInput("reduce_V11_3d needs a three-dimensional potential".into()));
        }
        Ok(scale_profile(&self.abs_v11_profile()?, self.half_integral_g()?))
    }

    /// 3D: 𝐖₁₁ = ½ ∫ |W|₁₁ dX∥.
    pub fn reduce_w11_3d(&self) -> Result<Profile> {
        if self.dim() != 3 {
            return Err(Error::InvalidInput("needs a three-dimensional potential".into()));
        }
        Ok(scale_profile(&self.abs_w11_profile()?, self.half_integral_g()?))
    }

    /// 𝐕₁₁(x, y) by adaptive quadrature of the pointwise |V|₁₁.
    pub fn v11_adaptive_at(&self, x: f64, y: f64) -> Result<f64> {
        Ok(0.5 * quad::adaptive_real_line(|t| self.abs_v11_at(x, y, t), 1e-12, 1e-300)?)
    }
}

/// |w| for a single-signed profile.
pub fn abs_profile(p: &Profile) -> Result<Profile> {
    match p {
        Profile::Table { spline, source } => {
            let (lo, hi) = spline_range(spline);
            if lo < 0.0 && hi > 0.0 {
                return Err(Error::InvalidInput(format!("table {source} changes sign; |w| is not a spline")));
            }
            Ok(if hi <= 0.0 { scale_profile(p, -1.0) } else { p.clone() })
        }
        Profile::Constant(c) => Ok(Profile::Constant(c.abs())),
        _ => Ok(scale_profile(p, if p.value(0.0) < 0.0 { -1.0 } else { 1.0 })),
    }
}

fn spline_range(s: &CubicSpline) -> (f64, f64) {
    let xmax = s.x_max();
    (0..=2000)
        .map(|i| s.eval3(xmax * i as f64 / 2000.0).0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

/// c · p.
pub fn scale_profile(p: &Profile, c: f64) -> Profile {
    match p {
        Profile::Zero => Profile::Zero,
        Profile::Constant(v) => Profile::Constant(v * c),
        Profile::Gaussian { amp, width } => Profile::Gaussian { amp: amp * c, width: *width },
        Profile::Disk { amp, radius } => Profile::Disk { amp: amp * c, radius: *radius },
        Profile::Bracket { amp, m } => Profile::Bracket { amp: amp * c, m: *m },
        Profile::Table { source, spline } => {
            let xmax = spline.x_max();
            let n = 4096;
            let xs: Vec<f64> = (0..n).map(|i| xmax * i as f64 / (n - 1) as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|&x| c * spline.eval3(x).0).collect();
            let s = CubicSpline::new(xs, ys).expect("valid resampling");
            Profile::Table { source: format!("{source}*{c}"), spline: std::sync::Arc::new(s) }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_m2(rng: &mut ChaCha8Rng) -> M2 {
        M2::from_fn(|_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn scalar_polar_form() {
        let eta = Complex64::from_polar(1.0, 0.7);
        let m = M2::new(eta, C0, C0, C0);
        let (abs, j) = polar_decompose_point(&m);
        assert!((abs - M2::new(C1, C0, C0, C0)).norm() < 1e-15);
        assert!((j - M2::new(eta, C0, C0, C0)).norm() < 1e-15);
    }

    #[test]
    fn positive_matrix_is_its_own_modulus() {
        let m = M2::new(Complex64::new(2.0, 0.0), Complex64::new(0.3, 0.4), Complex64::new(0.3, -0.4), Complex64::new(1.0, 0.0));
        let (abs, j) = polar_decompose_point(&m);
        assert!((abs - m).norm() < 1e-14);
        assert!((j - M2::identity()).norm() < 1e-14);
    }

    #[test]
    fn random_polar_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let m = random_m2(&mut rng);
            let (abs, j) = polar_decompose_point(&m);
            assert!((j * abs - m).norm() < 1e-12);
            assert!((abs * abs - m.adjoint() * m).norm() < 1e-12);
            let svd = m.svd(false, false);
            let (l, _) = herm2_eig(&abs);
            let mut s = [svd.singular_values[0], svd.singular_values[1]];
            s.sort_by(f64::total_cmp);
            assert!((l[0] - s[0]).abs() < 1e-12 && (l[1] - s[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_matrix_examples() {
        let w = M2::new(Complex64::new(2.0, 0.0), C0, C0, Complex64::new(-3.0, 0.0));
        let j = sign_matrix_point(&w);
        assert!((j - M2::new(C1, C0, C0, -C1)).norm() < 1e-15);
        let psd = M2::new(C1, C1, C1, C1);
        let p = sign_matrix_point(&psd);
        assert!((p * p - p).norm() < 1e-14 && (p * psd - psd).norm() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = random_m2(&mut rng);
            let h = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
            let j = sign_matrix_point(&h);
            assert!((j * h - abs_hermitian(&h)).norm() < 1e-12);
            assert!((j * j - M2::identity()).norm() < 1e-12);
        }
    }

    #[test]
    fn eta_scaling_of_polar_data() {
        let eta = Complex64::from_polar(1.7, 2.1);
        let w = M2::new(Complex64::new(1.5, 0.0), Complex64::new(0.2, 0.1), Complex64::new(0.2, -0.1), Complex64::new(0.5, 0.0));
        let (abs, j) = polar_decompose_point(&(w * eta));
        assert!((abs - abs_hermitian(&w) * Complex64::new(eta.norm(), 0.0)).norm() < 1e-13);
        assert!((j - sign_matrix_point(&w) * (eta / eta.norm())).norm() < 1e-13);
    }

    #[test]
    fn zero_eta_is_rejected() {
        let err = MatrixPotential::new(C0, 1.0, PotentialShape::diagonal(Profile::gaussian(1.0, 1.0), Profile::Zero), None)
            .unwrap_err();
        assert!(err.to_string().contains("eta must be nonzero"));
    }

    #[test]
    fn gaussian_reduction() {
        let pot = MatrixPotential::new(
            C1,
            1.0,
            PotentialShape::diagonal(Profile::gaussian(1.0, 1.0), Profile::Zero),
            Some(Profile::gaussian(1.0, 1.0)),
        )
        .unwrap();
        let v11 = pot.reduce_v11_3d().unwrap();
        let half = std::f64::consts::PI.sqrt() / 2.0;
        for &r in &[0.0, 0.5, 1.3] {
            assert!((v11.value(r) - half * (-r * r).exp()).abs() < 1e-13);
        }
        let adaptive = pot.v11_adaptive_at(0.3, -0.4).unwrap();
        assert!((adaptive - v11.value(0.5)).abs() < 1e-11);
    }

    #[test]
    fn bracket_longitudinal_factor() {
        let pot = MatrixPotential::new(
            C1,
            1.0,
            PotentialShape::diagonal(Profile::gaussian(1.0, 1.0), Profile::Zero),
            Some(Profile::bracket(1.0, 4.0)),
        )
        .unwrap();
        assert!((pot.half_integral_g().unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-9);
        assert!((pot.longitudinal_decay_exponent() - 4.0).abs() < 0.05);
        let slow = MatrixPotential::new(
            C1,
            1.0,
            PotentialShape::diagonal(Profile::gaussian(1.0, 1.0), Profile::Zero),
            Some(Profile::bracket(1.0, 1.0)),
        );
        assert!(slow.is_err());
    }
}

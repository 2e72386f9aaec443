//! Randomized self-check of the determinant and index engine: the elementary
//! determinant properties on random matrices and the winding index on
//! rational families with zeros placed by hand.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detindex::{
    calibrate_gamma, det_regularized, eigenvalues, index_along_contour, min_singular_value, Contour, FnFamily,
};
use crate::{CMatrix, Error, Result};

/// A determinant counts as vanishing below this, relative to its scale.
const ZERO_REL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetCheckOptions {
    pub seed: u64,
    pub cases: usize,
    pub dim: usize,
    pub families: usize,
    /// Regularization orders exercised.
    pub max_order: usize,
}

impl Default for DetCheckOptions {
    fn default() -> Self {
        Self { seed: 7, cases: 200, dim: 8, families: 50, max_order: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetCheckReport {
    pub cases: usize,
    pub families: usize,
    /// det_p(I) ≠ 1.
    pub identity_failures: usize,
    /// Largest relative gap between det_p(I - AB) and det_p(I - BA).
    pub ab_ba_max_rel: f64,
    /// Cases where invertibility of I - T and vanishing of det_p disagree.
    pub invertibility_failures: usize,
    /// Rational families whose winding differs from the placed multiplicity.
    pub index_failures: usize,
    /// Smallest Γ making the Lipschitz estimate hold on the sampled pairs (p = 2).
    pub gamma: f64,
}

impl DetCheckReport {
    pub fn pass(&self) -> bool {
        self.identity_failures == 0 && self.ab_ba_max_rel < 1e-10 && self.invertibility_failures == 0 && self.index_failures == 0
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale)
}

/// det_p(I - T) is zero relative to the size of its factors.
fn det_vanishes(t: &CMatrix, p: usize) -> Result<bool> {
    let d = det_regularized(t, p)?;
    let lams = eigenvalues(t)?;
    let mut scale = 1.0;
    for l in &lams {
        let mut expo = Complex64::new(0.0, 0.0);
        let mut pw = Complex64::new(1.0, 0.0);
        for k in 1..p {
            pw *= l;
            expo += pw / k as f64;
        }
        scale *= (Complex64::new(1.0, 0.0) - l).norm().max(1.0) * expo.re.exp();
    }
    Ok(d.norm() < ZERO_REL * scale)
}

pub fn run_detcheck(opts: &DetCheckOptions) -> Result<DetCheckReport> {
    if opts.dim == 0 || opts.max_order == 0 {
        return Err(Error::InvalidInput("detcheck needs dim ≥ 1 and max_order ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = opts.dim;
    let zero = CMatrix::zeros(n, n);
    let mut identity_failures = 0;
    let mut ab_ba_max_rel: f64 = 0.0;
    let mut invertibility_failures = 0;
    let mut pairs = Vec::with_capacity(opts.cases);
    for case in 0..opts.cases {
        let p = 1 + case % opts.max_order;
        if det_regularized(&zero, p)? != Complex64::new(1.0, 0.0) {
            identity_failures += 1;
        }
        let a = random_matrix(&mut rng, n, 0.4);
        let b = random_matrix(&mut rng, n, 0.4);
        let lhs = det_regularized(&(&a * &b), p)?;
        let rhs = det_regularized(&(&b * &a), p)?;
        ab_ba_max_rel = ab_ba_max_rel.max((lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(f64::MIN_POSITIVE));

        // A generic T and the same T rescaled so that 1 is an eigenvalue.
        let t = random_matrix(&mut rng, n, 0.5);
        let lam = eigenvalues(&t)?.into_iter().max_by(|x, y| x.norm().total_cmp(&y.norm())).unwrap_or_default();
        let singular = &t / lam;
        let id = CMatrix::identity(n, n);
        for (m, expect_singular) in [(&t, false), (&singular, true)] {
            let sigma = min_singular_value(&(&id - m));
            let invertible = sigma > 1e-8;
            if invertible == det_vanishes(m, p)? || invertible == expect_singular {
                invertibility_failures += 1;
            }
        }
        pairs.push((t.clone(), &t + random_matrix(&mut rng, n, 1e-3)));
    }
    let gamma = calibrate_gamma(&pairs, 2)?;

    let mut index_failures = 0;
    let contour = Contour::circle(Complex64::new(0.0, 0.0), 1.0).with_samples(64);
    for _ in 0..opts.families {
        let size = rng.gen_range(1..=4usize);
        let mut factors = Vec::with_capacity(size);
        let mut expected = 0;
        for _ in 0..size {
            let inside = rng.gen_bool(0.6);
            let rho = if inside { rng.gen_range(0.0..0.8) } else { rng.gen_range(1.3..2.0) };
            let zero_at = Complex64::from_polar(rho, rng.gen_range(0.0..std::f64::consts::TAU));
            let pole_at = Complex64::from_polar(rng.gen_range(1.5..3.0), rng.gen_range(0.0..std::f64::consts::TAU));
            let mult = rng.gen_range(1..=3i32);
            if inside {
                expected += mult as i64;
            }
            factors.push((zero_at, pole_at, mult));
        }
        let s = CMatrix::identity(size, size) + random_matrix(&mut rng, size, 0.3 / size as f64);
        let s_inv = s.clone().try_inverse().ok_or_else(|| Error::LinearAlgebra("conjugation matrix is singular".into()))?;
        let fam = FnFamily {
            dim: size,
            f: move |z: Complex64| {
                let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    size,
                    factors.iter().map(|&(a, p, m)| (z - a).powi(m) / (z - p)),
                ));
                &s * d * &s_inv
            },
        };
        if index_along_contour(&fam, &contour)? != expected {
            index_failures += 1;
        }
    }

    Ok(DetCheckReport {
        cases: opts.cases,
        families: opts.families,
        identity_failures,
        ab_ba_max_rel,
        invertibility_failures,
        index_failures,
        gamma,
    })
}

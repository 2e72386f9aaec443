//! Small special-function helpers.

use num_complex::Complex64;

pub use statrs::function::gamma::ln_gamma;

/// Generalized Laguerre polynomials L_0^a(x), ..., L_{n-1}^a(x).
pub fn laguerre_all(n: usize, a: f64, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push(1.0);
    if n == 1 {
        return out;
    }
    out.push(1.0 + a - x);
    for k in 1..n - 1 {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * out[k] - (kf + a) * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// exp(z) - 1 without cancellation for small |z|.
pub fn expm1(z: Complex64) -> Complex64 {
    if z.norm() < 0.1 {
        let mut term = z;
        let mut sum = z;
        for k in 2..30 {
            term *= z / k as f64;
            sum += term;
            if term.norm() < 1e-17 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        z.exp() - 1.0
    }
}

/// Square root with nonnegative imaginary part, cut along [0, inf).
/// On (0, inf) it returns the boundary value from the upper half plane,
/// the positive root.
pub fn sqrt_upper(z: Complex64) -> Complex64 {
    if z.im == 0.0 && z.re >= 0.0 {
        return Complex64::new(z.re.sqrt(), 0.0);
    }
    let w = z.sqrt();
    if w.im < 0.0 {
        -w
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laguerre_matches_closed_forms() {
        let x = 0.7;
        let a = 2.0;
        let l = laguerre_all(3, a, x);
        assert!((l[1] - (3.0 - x)).abs() < 1e-15);
        let l2 = x * x / 2.0 - (a + 2.0) * x + (a + 2.0) * (a + 1.0) / 2.0;
        assert!((l[2] - l2).abs() < 1e-14);
    }

    #[test]
    fn expm1_small_and_large() {
        let z = Complex64::new(1e-12, 2e-12);
        assert!((expm1(z) - z).norm() < 1e-23);
        let w = Complex64::new(0.3, -1.2);
        assert!((expm1(w) - (w.exp() - 1.0)).norm() < 1e-15);
    }

    #[test]
    fn sqrt_upper_branch() {
        assert_eq!(sqrt_upper(Complex64::new(-1.0, 0.0)), Complex64::new(0.0, 1.0));
        assert_eq!(sqrt_upper(Complex64::new(4.0, 0.0)), Complex64::new(2.0, 0.0));
        let k = Complex64::new(0.3, -0.2);
        assert!((sqrt_upper(k * k) + k).norm() < 1e-15);
    }
}

//! Quadrature rules: Gauss-Legendre panels, windows for log-concave
//! densities, and an adaptive Gauss-Kronrod integrator.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let theta = std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5);
            let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    let (_, d) = legendre_with_derivative(n, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cached Gauss-Legendre rule of order `n`.
pub fn gauss_legendre(n: usize) -> Arc<GaussLegendre> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard.entry(n).or_insert_with(|| Arc::new(GaussLegendre::new(n))).clone()
}

/// A 1D quadrature rule on a bounded interval.
#[derive(Debug, Clone, Default)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Gauss-Legendre of the given order on every panel delimited by `breaks`.
    pub fn composite(breaks: &[f64], order: usize) -> Self {
        let gl = gauss_legendre(order);
        let mut nodes = Vec::with_capacity(order * breaks.len().saturating_sub(1));
        let mut weights = Vec::with_capacity(nodes.capacity());
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b <= a {
                continue;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        }
        Self { nodes, weights }
    }

    /// Equal panels on [a, b], with extra panel boundaries at `extra` points
    /// falling inside the interval.
    pub fn panels(a: f64, b: f64, panels: usize, order: usize, extra: &[f64]) -> Self {
        let mut breaks: Vec<f64> = (0..=panels).map(|i| a + (b - a) * i as f64 / panels as f64).collect();
        breaks.extend(extra.iter().copied().filter(|&x| x > a && x < b));
        breaks.sort_by(|x, y| x.total_cmp(y));
        breaks.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));
        Self::composite(&breaks, order)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Interval `[lo, hi]` outside of which `exp(a ln u - c u)` is below its
/// maximum by more than `e^{-margin}`. Requires `a >= 0`, `c > 0`.
pub fn gamma_window(a: f64, c: f64, margin: f64) -> (f64, f64) {
    let peak = if a > 0.0 { a / c } else { 0.0 };
    let logf = |u: f64| {
        if u <= 0.0 {
            if a == 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            a * u.ln() - c * u
        }
    };
    let top = logf(peak.max(f64::MIN_POSITIVE));
    let target = if a == 0.0 { -margin } else { top - margin };
    let lo = if a == 0.0 || logf(0.0) >= target { 0.0 } else { bisect(|u| logf(u) - target, 0.0, peak) };
    let mut hi_end = peak.max(1.0 / c) * 2.0 + margin / c;
    while logf(hi_end) > target {
        hi_end *= 2.0;
    }
    let hi = bisect(|u| target - logf(u), peak, hi_end);
    (lo, hi)
}

/// Root of an increasing function on [a, b] by bisection.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
        if (b - a) <= 1e-15 * b.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (a + b)
}

const KRONROD_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_W: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const GAUSS7_W: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = KRONROD_W[7] * fc;
    let mut g = GAUSS7_W[3] * fc;
    for i in 0..7 {
        let dx = h * KRONROD_X[i];
        let s = f(c - dx) + f(c + dx);
        k += KRONROD_W[i] * s;
        if i % 2 == 1 {
            g += GAUSS7_W[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod (7-15) integration on a finite interval.
pub fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    let mut stack = vec![(a, b, 0usize)];
    let mut total = 0.0;
    let mut err_total = 0.0;
    let (whole, _) = kronrod15(&f, a, b);
    let scale = whole.abs();
    let mut evals = 0usize;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, e) = kronrod15(&f, lo, hi);
        evals += 15;
        let tol = (rel_tol * scale).max(abs_tol) * (hi - lo) / (b - a);
        if e <= tol.max(1e-15 * v.abs()) || depth >= 48 {
            if depth >= 48 && e > tol {
                return Err(Error::Quadrature(format!("adaptive quadrature did not converge on [{lo}, {hi}]")));
            }
            total += v;
            err_total += e;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
        if evals > 2_000_000 {
            return Err(Error::Quadrature("adaptive quadrature exceeded evaluation budget".into()));
        }
    }
    let _ = err_total;
    Ok(total)
}

/// Adaptive integration over [a, inf) through the map x = a + t/(1-t).
pub fn adaptive_semi_infinite(f: impl Fn(f64) -> f64, a: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    adaptive(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            f(a + t / s) / (s * s)
        },
        0.0,
        1.0,
        rel_tol,
        abs_tol,
    )
}

/// Adaptive integration over the real line, split at the origin.
pub fn adaptive_real_line(f: impl Fn(f64) -> f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    let right = adaptive_semi_infinite(&f, 0.0, rel_tol, abs_tol)?;
    let left = adaptive_semi_infinite(|x| f(-x), 0.0, rel_tol, abs_tol)?;
    Ok(left + right)
}

/// Log of a sum of exponentials, stable for large spreads.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(10);
        let s: f64 = gl.nodes.iter().zip(&gl.weights).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        let total: f64 = gl.weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn high_order_rule_is_accurate() {
        let rule = Rule::composite(&[0.0, 3.0], 256);
        let v = rule.integrate(|x| (-x * x).exp());
        let exact = 0.886_226_925_452_758 * statrs::function::erf::erf(3.0);
        assert!((v - exact).abs() < 1e-15);
    }

    #[test]
    fn gamma_window_contains_the_mass() {
        let (lo, hi) = gamma_window(50.0, 0.5, 60.0);
        assert!(lo > 0.0 && lo < 100.0 && hi > 100.0);
        let rule = Rule::panels(lo, hi, 4, 64, &[]);
        // integral of u^50 e^{-u/2} = 50! 2^51
        let log_terms = rule.nodes.iter().zip(&rule.weights).map(|(&u, &w)| w.ln() + 50.0 * u.ln() - 0.5 * u);
        let exact = statrs::function::gamma::ln_gamma(51.0) + 51.0 * 2f64.ln();
        assert!((log_sum_exp(log_terms) - exact).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_infinite_ranges() {
        let v = adaptive_real_line(|t| (-t * t).exp(), 1e-13, 0.0).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let w = adaptive_real_line(|t| 1.0 / (1.0 + t * t).powi(2), 1e-13, 0.0).unwrap();
        assert!((w - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}

//! Toeplitz operators pUp on the zero modes, counting functions and the
//! H1-H3 asymptotic regimes.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::ZeroModeBasis;
use crate::profile::Profile;
use crate::quad::Rule;
use crate::{Error, Result};

/// Number of angles of the polar grid for non-radial symbols.
pub const ANGLES: usize = 256;

type PlanarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Symbol U >= 0 of a Toeplitz operator.
#[derive(Clone)]
pub enum Symbol {
    Radial(Profile),
    Planar { name: String, f: PlanarFn },
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Radial(p) => write!(f, "Radial({p})"),
            Symbol::Planar { name, .. } => write!(f, "Planar({name})"),
        }
    }
}

impl Symbol {
    pub fn planar(name: impl Into<String>, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Symbol::Planar { name: name.into(), f: Arc::new(f) }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            Symbol::Radial(p) => p.value((x * x + y * y).sqrt()),
            Symbol::Planar { f, .. } => f(x, y),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ToeplitzMatrix {
    Diagonal(Vec<f64>),
    Dense(DMatrix<Complex64>),
}

impl ToeplitzMatrix {
    pub fn entry(&self, j: usize, k: usize) -> Complex64 {
        match self {
            ToeplitzMatrix::Diagonal(d) => {
                if j == k {
                    Complex64::new(d[j], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            ToeplitzMatrix::Dense(m) => m[(j, k)],
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        match self {
            ToeplitzMatrix::Diagonal(d) => {
                DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(d.len(), d.iter().map(|&v| Complex64::new(v, 0.0))))
            }
            ToeplitzMatrix::Dense(m) => m.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToeplitzOperator {
    pub k_count: usize,
    pub symbol: Symbol,
    pub matrix: ToeplitzMatrix,
    /// Eigenvalues in descending order.
    pub eigs: Vec<f64>,
}

pub fn assemble(basis: &ZeroModeBasis, symbol: &Symbol) -> Result<ToeplitzOperator> {
    check_symbol(basis, symbol)?;
    let k_count = basis.k_count;
    let (matrix, mut eigs) = match symbol {
        Symbol::Radial(p) => {
            let breaks = p.breakpoints();
            let diag: Vec<f64> =
                (0..k_count).into_par_iter().map(|k| basis.mode_rule(k, &breaks).expectation(|r| p.value(r))).collect();
            let eigs = diag.clone();
            (ToeplitzMatrix::Diagonal(diag), eigs)
        }
        Symbol::Planar { f, .. } => {
            let m = assemble_planar(basis, f.as_ref());
            let eig = nalgebra::SymmetricEigen::new(m.clone());
            (ToeplitzMatrix::Dense(m), eig.eigenvalues.iter().copied().collect())
        }
    };
    eigs.sort_by(|a, b| b.total_cmp(a));
    Ok(ToeplitzOperator { k_count, symbol: symbol.clone(), matrix, eigs })
}

fn check_symbol(basis: &ZeroModeBasis, symbol: &Symbol) -> Result<()> {
    let (_, hi) = basis.window(basis.k_count - 1);
    let r_far = hi.sqrt();
    let mut sup: f64 = 0.0;
    for i in 0..=400 {
        let r = r_far * i as f64 / 400.0;
        for a in 0..8 {
            let t = a as f64 * std::f64::consts::FRAC_PI_4;
            let v = symbol.value(r * t.cos(), r * t.sin());
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("symbol not finite at r = {r}")));
            }
            if v < 0.0 {
                return Err(Error::InvalidInput(format!("symbol negative at r = {r}")));
            }
            sup = sup.max(v);
        }
    }
    let tail = (0..8)
        .map(|a| {
            let t = a as f64 * std::f64::consts::FRAC_PI_4;
            symbol.value(r_far * t.cos(), r_far * t.sin())
        })
        .fold(0.0, f64::max);
    if sup > 0.0 && tail > 1e-3 * sup {
        return Err(Error::InvalidInput(format!("symbol does not decay over the quadrature range: U({r_far:.1}) = {tail:.3e}")));
    }
    Ok(())
}

fn assemble_planar(basis: &ZeroModeBasis, f: &(dyn Fn(f64, f64) -> f64 + Send + Sync)) -> DMatrix<Complex64> {
    let k_count = basis.k_count;
    let b0 = basis.field.b0;
    let (_, hi) = basis.window(k_count - 1);
    let panel = 4.0 / b0;
    let panels = ((hi / panel).ceil() as usize).max(8);
    let rule = Rule::panels(0.0, hi, panels, 24, &[]);
    let max_m = k_count as i64 - 1;
    // Angular Fourier coefficients Û_m(u) = ∫ e^{imθ} U dθ at every node.
    let fourier: Vec<Vec<Complex64>> = rule
        .nodes
        .par_iter()
        .map(|&u| {
            let r = u.sqrt();
            let samples: Vec<f64> = (0..ANGLES)
                .map(|a| {
                    let t = 2.0 * std::f64::consts::PI * a as f64 / ANGLES as f64;
                    f(r * t.cos(), r * t.sin())
                })
                .collect();
            (0..=2 * max_m)
                .map(|idx| {
                    let m = idx - max_m;
                    let step = 2.0 * std::f64::consts::PI / ANGLES as f64;
                    samples.iter().enumerate().map(|(a, &v)| Complex64::from_polar(v * step, m as f64 * a as f64 * step)).sum()
                })
                .collect()
        })
        .collect();
    let log_norm: Vec<f64> = (0..k_count).map(|k| basis.log_norm(k)).collect();
    let entries: Vec<Complex64> = (0..k_count * k_count)
        .into_par_iter()
        .map(|idx| {
            let (j, k) = (idx / k_count, idx % k_count);
            if k < j {
                return Complex64::new(0.0, 0.0);
            }
            let m = (k as i64 - j as i64 + max_m) as usize;
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, (&u, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
                let r = u.sqrt();
                let phi = b0 * u / 4.0 + basis.field.phi_tilde_at(r);
                let lu = if j + k == 0 { 0.0 } else { 0.5 * (j + k) as f64 * u.ln() };
                let lw = lu - 2.0 * phi - log_norm[j] - log_norm[k];
                acc += fourier[n][m] * (0.5 * w * lw.exp());
            }
            acc
        })
        .collect();
    let mut mat = DMatrix::from_fn(k_count, k_count, |j, k| entries[j * k_count + k]);
    for j in 0..k_count {
        mat[(j, j)].im = 0.0;
        for k in 0..j {
            mat[(j, k)] = mat[(k, j)].conj();
        }
    }
    mat
}

impl ToeplitzOperator {
    /// Smallest retained eigenvalue; counts below it are meaningless.
    pub fn floor(&self) -> f64 {
        *self.eigs.last().expect("nonempty spectrum")
    }

    /// n(r) = #{j : μ_j > r}.
    pub fn counting(&self, r: f64) -> Result<usize> {
        if !(r > 0.0) {
            return Err(Error::InvalidInput(format!("threshold must be positive, got {r}")));
        }
        if r <= self.floor() {
            return Err(Error::Truncation(format!(
                "threshold {r:.3e} is below the truncation floor {:.3e}; increase K",
                self.floor()
            )));
        }
        Ok(self.eigs.iter().filter(|&&m| m > r).count())
    }

    /// Decades between the top eigenvalue and ten times the floor.
    pub fn available_decades(&self) -> f64 {
        let top = self.eigs[0];
        let floor = 10.0 * self.floor().max(f64::MIN_POSITIVE);
        if top <= floor {
            0.0
        } else {
            (top / floor).log10()
        }
    }

    /// Counting curve on the given thresholds; thresholds below ten times the
    /// truncation floor are refused.
    pub fn curve(&self, thresholds: &[f64]) -> Result<CountingCurve> {
        let floor = 10.0 * self.floor();
        let mut ts = thresholds.to_vec();
        ts.sort_by(|a, b| b.total_cmp(a));
        if let Some(&low) = ts.last() {
            if low < floor {
                return Err(Error::Truncation(format!(
                    "threshold {low:.3e} is below ten times the truncation floor ({floor:.3e}); increase K"
                )));
            }
        }
        let counts = ts.iter().map(|&r| self.counting(r)).collect::<Result<Vec<_>>>()?;
        Ok(CountingCurve { thresholds: ts, counts, available_decades: self.available_decades(), model: Vec::new(), regime: None })
    }

    /// Log-spaced counting curve between r_hi and r_lo.
    pub fn curve_log(&self, r_hi: f64, r_lo: f64, per_decade: usize) -> Result<CountingCurve> {
        let decades = (r_hi / r_lo).log10();
        let n = (decades * per_decade as f64).round() as usize;
        let ts: Vec<f64> = (0..=n).map(|i| r_hi * 10f64.powf(-(i as f64) / per_decade as f64)).collect();
        self.curve(&ts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Regime {
    /// Power decay U ~ r^{-m}: n(r) ~ C_m r^{-2/m}.
    H1 { m: f64 },
    /// Gaussian-type decay U ~ exp(-μ r^{2β}); only β = 1 has a closed model.
    H2 { beta: f64, decay: f64, b0: f64 },
    /// Compact support: n(r) ~ |ln r| / ln|ln r|.
    H3,
}

impl Regime {
    pub fn model(&self, r: f64) -> Result<f64> {
        let lr = r.ln().abs();
        match *self {
            Regime::H1 { .. } => Err(Error::InvalidInput("H1 model has a fitted constant".into())),
            Regime::H2 { beta, decay, b0 } => {
                if beta != 1.0 {
                    return Err(Error::InvalidInput("only beta = 1 has a closed-form H2 model".into()));
                }
                Ok(lr / (1.0 + 2.0 * decay / b0).ln())
            }
            Regime::H3 => Ok(lr / lr.ln()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CountingCurve {
    pub thresholds: Vec<f64>,
    pub counts: Vec<usize>,
    pub available_decades: f64,
    pub model: Vec<f64>,
    pub regime: Option<Regime>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub regime: Regime,
    /// Least-squares slope of ln n against ln r.
    pub slope: f64,
    /// Fitted prefactor (H1 only).
    pub prefactor: Option<f64>,
    pub max_rel_dev: f64,
    pub max_abs_dev: f64,
    pub decades: f64,
}

/// Least-squares slope and intercept of y against x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn fit_regime(curve: &mut CountingCurve, regime: Regime) -> Result<FitReport> {
    if curve.available_decades < 6.0 {
        return Err(Error::Truncation(format!("only {:.1} decades above the truncation floor, need 6", curve.available_decades)));
    }
    let pts: Vec<(f64, f64)> =
        curve.thresholds.iter().zip(&curve.counts).filter(|(_, &n)| n > 0).map(|(&r, &n)| (r, n as f64)).collect();
    if pts.len() < 3 {
        return Err(Error::InvalidInput("need at least three nonzero counts".into()));
    }
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept) = linear_fit(&lx, &ly);
    let (model, prefactor): (Vec<f64>, Option<f64>) = match regime {
        Regime::H1 { m } => {
            // Prefactor fitted with the exponent pinned to -2/m.
            let e = -2.0 / m;
            let c = (ly.iter().zip(&lx).map(|(y, x)| y - e * x).sum::<f64>() / lx.len() as f64).exp();
            (curve.thresholds.iter().map(|r| c * r.powf(e)).collect(), Some(c))
        }
        _ => (curve.thresholds.iter().map(|&r| regime.model(r)).collect::<Result<_>>()?, None),
    };
    let _ = intercept;
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for (n, m) in curve.counts.iter().zip(&model) {
        max_abs = max_abs.max((*n as f64 - m).abs());
        max_rel = max_rel.max((*n as f64 / m - 1.0).abs());
    }
    let r_hi = curve.thresholds.first().copied().unwrap_or(1.0);
    let r_lo = curve.thresholds.last().copied().unwrap_or(1.0);
    curve.model = model;
    curve.regime = Some(regime);
    Ok(FitReport { regime, slope, prefactor, max_rel_dev: max_rel, max_abs_dev: max_abs, decades: (r_hi / r_lo).log10() })
}

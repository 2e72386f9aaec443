//! Regularized determinants, winding-number indices of matrix families along
//! contours and characteristic-value search.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use nalgebra::linalg::Schur;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::{CMatrix, Error, Result};

const C1: Complex64 = Complex64::new(1.0, 0.0);

/// Determinant stored as ln|det| and a unit phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDet {
    pub ln_abs: f64,
    pub phase: Complex64,
}

impl LogDet {
    pub fn value(&self) -> Complex64 {
        self.phase * self.ln_abs.exp()
    }

    pub fn is_zero(&self) -> bool {
        self.ln_abs == f64::NEG_INFINITY
    }

    /// ln(self / other) on the principal branch of the phase.
    pub fn ln_ratio(&self, other: &LogDet) -> Complex64 {
        Complex64::new(self.ln_abs - other.ln_abs, (self.phase / other.phase).arg())
    }
}

/// Plain determinant by LU with partial pivoting, in log form.
pub fn log_det(m: &CMatrix) -> Result<LogDet> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::LinearAlgebra("determinant of a non-square matrix".into()));
    }
    if n == 0 {
        return Ok(LogDet { ln_abs: 0.0, phase: C1 });
    }
    if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::LinearAlgebra("matrix has non-finite entries".into()));
    }
    let lu = m.clone().lu();
    let mut phase: Complex64 = lu.p().determinant();
    let mut ln_abs = 0.0;
    let u = lu.u();
    for i in 0..n {
        let d = u[(i, i)];
        let a = d.norm();
        if a == 0.0 {
            return Ok(LogDet { ln_abs: f64::NEG_INFINITY, phase: C1 });
        }
        ln_abs += a.ln();
        phase *= d / a;
    }
    Ok(LogDet { ln_abs, phase: phase / phase.norm() })
}

/// Eigenvalues of a square complex matrix from the complex Schur form.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), 1e-15, 100_000)
        .ok_or_else(|| Error::LinearAlgebra("Schur iteration did not converge".into()))?;
    let ev = schur.eigenvalues().ok_or_else(|| Error::LinearAlgebra("Schur form is not triangular".into()))?;
    Ok(ev.iter().copied().collect())
}

/// det_p(I - T) = prod (1 - λ) exp(sum_{k<p} λ^k / k) over the eigenvalues λ of T.
pub fn det_regularized(t: &CMatrix, p: usize) -> Result<Complex64> {
    if p == 0 {
        return Err(Error::InvalidInput("regularization order must be at least 1".into()));
    }
    let n = t.nrows();
    if p == 1 {
        let f = CMatrix::identity(n, n) - t;
        return Ok(log_det(&f)?.value());
    }
    let lams = eigenvalues(t)?;
    let mut prod = C1;
    let mut expo = Complex64::new(0.0, 0.0);
    for l in lams {
        prod *= C1 - l;
        let mut pw = C1;
        for k in 1..p {
            pw *= l;
            expo += pw / k as f64;
        }
    }
    Ok(prod * expo.exp())
}

/// Singular values, descending.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    // the unbounded iteration never ends on non-finite input
    if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return vec![f64::NAN; m.nrows().min(m.ncols())];
    }
    let Some(svd) = m.clone().try_svd(false, false, f64::EPSILON, 100_000) else {
        return vec![f64::NAN; m.nrows().min(m.ncols())];
    };
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn min_singular_value(m: &CMatrix) -> f64 {
    singular_values(m).last().copied().unwrap_or(f64::INFINITY)
}

/// Schatten p-norm.
pub fn schatten_norm(m: &CMatrix, p: usize) -> f64 {
    let p = p as f64;
    singular_values(m).iter().map(|s| s.powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Right side of the Lipschitz estimate for det_p.
pub fn lipschitz_bound(t1: &CMatrix, t2: &CMatrix, p: usize, gamma: f64) -> f64 {
    let d = schatten_norm(&(t1 - t2), p);
    let s = schatten_norm(t1, p) + schatten_norm(t2, p) + 1.0;
    d * (gamma * s.powi(p as i32)).exp()
}

/// Smallest Γ ≥ 1 for which the Lipschitz estimate holds on all given pairs.
pub fn calibrate_gamma(pairs: &[(CMatrix, CMatrix)], p: usize) -> Result<f64> {
    let mut gamma: f64 = 1.0;
    for (a, b) in pairs {
        let lhs = (det_regularized(a, p)? - det_regularized(b, p)?).norm();
        let d = schatten_norm(&(a - b), p);
        if lhs == 0.0 || d == 0.0 {
            continue;
        }
        let s = (schatten_norm(a, p) + schatten_norm(b, p) + 1.0).powi(p as i32);
        gamma = gamma.max((lhs / d).ln() / s);
    }
    Ok(gamma)
}

/// A holomorphic family z ↦ F(z) of square matrices; characteristic values
/// are the zeros of det F.
pub trait OperatorFamily: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, z: Complex64) -> Result<CMatrix>;

    /// Regularization order used when reporting det_p.
    fn order(&self) -> usize {
        1
    }

    fn in_domain(&self, _z: Complex64) -> bool {
        true
    }

    /// Finite-difference step for derivatives at z.
    fn fd_step(&self, z: Complex64) -> f64 {
        1e-6 * z.norm().max(1.0)
    }

    /// F'(z) by the fourth-order central difference.
    fn derivative(&self, z: Complex64) -> Result<CMatrix> {
        let h = self.fd_step(z);
        let f = |s: f64| self.eval(z + s * h);
        let d1 = f(1.0)? - f(-1.0)?;
        let d2 = f(2.0)? - f(-2.0)?;
        Ok((d1 * Complex64::new(8.0, 0.0) - d2) / Complex64::new(12.0 * h, 0.0))
    }

    fn log_det(&self, z: Complex64) -> Result<LogDet> {
        log_det(&self.eval(z)?)
    }
}

/// Family given by a closure.
pub struct FnFamily<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> OperatorFamily for FnFamily<F>
where
    F: Fn(Complex64) -> CMatrix + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, z: Complex64) -> Result<CMatrix> {
        Ok((self.f)(z))
    }
}

/// z ↦ I - T(z)/z.
pub struct Characteristic<F> {
    pub dim: usize,
    pub t: F,
}

impl<F> OperatorFamily for Characteristic<F>
where
    F: Fn(Complex64) -> CMatrix + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, z: Complex64) -> Result<CMatrix> {
        if z.norm() == 0.0 {
            return Err(Error::InvalidInput("characteristic family evaluated at 0".into()));
        }
        Ok(CMatrix::identity(self.dim, self.dim) - (self.t)(z) / z)
    }

    fn in_domain(&self, z: Complex64) -> bool {
        z.norm() > 0.0
    }

    fn fd_step(&self, z: Complex64) -> f64 {
        1e-6 * z.norm().max(1.0).min(z.norm() * 1e3)
    }
}

/// Piece of a contour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Line {
        from: Complex64,
        to: Complex64,
    },
    /// Arc from `center + radius e^{i start}` sweeping a signed angle.
    Arc {
        center: Complex64,
        radius: f64,
        start: f64,
        sweep: f64,
    },
}

impl Segment {
    pub fn at(&self, t: f64) -> Complex64 {
        match *self {
            Segment::Line { from, to } => from + (to - from) * t,
            Segment::Arc { center, radius, start, sweep } => center + Complex64::from_polar(radius, start + sweep * t),
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Segment::Line { from, to } => (to - from).norm(),
            Segment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn scaled(&self, c: Complex64) -> Segment {
        match *self {
            Segment::Line { from, to } => Segment::Line { from: from * c, to: to * c },
            Segment::Arc { center, radius, start, sweep } => {
                Segment::Arc { center: center * c, radius: radius * c.norm(), start: start + c.arg(), sweep }
            }
        }
    }
}

/// Union of closed, positively oriented (as a boundary) loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub loops: Vec<Vec<Segment>>,
    /// Initial samples per segment before adaptive refinement.
    pub samples: usize,
}

impl Contour {
    pub fn from_loops(loops: Vec<Vec<Segment>>) -> Result<Self> {
        let c = Self { loops, samples: 16 };
        c.check_closed()?;
        Ok(c)
    }

    pub fn circle(center: Complex64, radius: f64) -> Self {
        Self { loops: vec![vec![Segment::Arc { center, radius, start: 0.0, sweep: TAU }]], samples: 64 }
    }

    pub fn polygon(points: &[Complex64]) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidInput("polygon needs at least three vertices".into()));
        }
        let segs = (0..points.len()).map(|i| Segment::Line { from: points[i], to: points[(i + 1) % points.len()] }).collect();
        Self::from_loops(vec![segs])
    }

    pub fn rectangle(lo: Complex64, hi: Complex64) -> Result<Self> {
        Self::polygon(&[lo, Complex64::new(hi.re, lo.im), hi, Complex64::new(lo.re, hi.im)])
    }

    /// Boundary of {lo ≤ Re w ≤ hi, |Im w| ≤ slope Re w}.
    pub fn trapezoid(lo: f64, hi: f64, slope: f64) -> Result<Self> {
        if !(0.0 < lo && lo < hi) {
            return Err(Error::InvalidInput("trapezoid needs 0 < lo < hi".into()));
        }
        Self::polygon(&[
            Complex64::new(lo, -slope * lo),
            Complex64::new(hi, -slope * hi),
            Complex64::new(hi, slope * hi),
            Complex64::new(lo, slope * lo),
        ])
    }

    /// Boundary of {r_in ≤ |z| ≤ r_out, arg_lo ≤ arg z ≤ arg_hi}; a full turn gives an annulus.
    pub fn annular_sector(r_in: f64, r_out: f64, arg_lo: f64, arg_hi: f64) -> Result<Self> {
        if !(0.0 < r_in && r_in < r_out) || !(arg_hi > arg_lo) {
            return Err(Error::InvalidInput("annular sector needs 0 < r_in < r_out and arg_lo < arg_hi".into()));
        }
        let o = Complex64::new(0.0, 0.0);
        let sweep = arg_hi - arg_lo;
        if sweep >= TAU - 1e-14 {
            return Ok(Self {
                loops: vec![
                    vec![Segment::Arc { center: o, radius: r_out, start: arg_lo, sweep: TAU }],
                    vec![Segment::Arc { center: o, radius: r_in, start: arg_lo, sweep: -TAU }],
                ],
                samples: 64,
            });
        }
        let c = Self {
            loops: vec![vec![
                Segment::Line { from: Complex64::from_polar(r_in, arg_lo), to: Complex64::from_polar(r_out, arg_lo) },
                Segment::Arc { center: o, radius: r_out, start: arg_lo, sweep },
                Segment::Line { from: Complex64::from_polar(r_out, arg_hi), to: Complex64::from_polar(r_in, arg_hi) },
                Segment::Arc { center: o, radius: r_in, start: arg_hi, sweep: -sweep },
            ]],
            samples: 32,
        };
        c.check_closed()?;
        Ok(c)
    }

    /// Image under w ↦ c w.
    pub fn scaled(&self, c: Complex64) -> Self {
        Self { loops: self.loops.iter().map(|l| l.iter().map(|s| s.scaled(c)).collect()).collect(), samples: self.samples }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples.max(2);
        self
    }

    /// Largest endpoint gap between consecutive segments.
    pub fn closure_gap(&self) -> f64 {
        let mut gap: f64 = 0.0;
        for lp in &self.loops {
            for i in 0..lp.len() {
                let next = &lp[(i + 1) % lp.len()];
                gap = gap.max((lp[i].at(1.0) - next.at(0.0)).norm());
            }
        }
        gap
    }

    fn scale(&self) -> f64 {
        self.loops.iter().flatten().map(|s| s.at(0.0).norm() + s.length()).fold(0.0, f64::max)
    }

    fn check_closed(&self) -> Result<()> {
        if self.closure_gap() > 1e-12 * self.scale().max(1e-300) {
            return Err(Error::InvalidInput("contour is not closed".into()));
        }
        Ok(())
    }

    /// Geometric winding number of the contour around w.
    pub fn winding_around(&self, w: Complex64) -> i64 {
        let mut total = 0.0;
        for lp in &self.loops {
            for seg in lp {
                let n = 256;
                for i in 0..n {
                    let a = seg.at(i as f64 / n as f64) - w;
                    let b = seg.at((i + 1) as f64 / n as f64) - w;
                    total += (b / a).arg();
                }
            }
        }
        (total / TAU).round() as i64
    }

    pub fn contains(&self, w: Complex64) -> bool {
        self.winding_around(w) != 0
    }
}

#[derive(Debug, Clone)]
struct Sample {
    t: f64,
    z: Complex64,
    det: LogDet,
}

/// Winding of det F along one segment; returns the accumulated angle and
/// the smallest ln|det| seen.
fn segment_winding<F: OperatorFamily + ?Sized>(fam: &F, seg: &Segment, n0: usize) -> Result<(f64, Sample)> {
    let eval = |t: f64| -> Result<Sample> {
        let z = seg.at(t);
        let det = fam.log_det(z)?;
        if det.is_zero() {
            return Err(Error::OnContour { re: z.re, im: z.im });
        }
        Ok(Sample { t, z, det })
    };
    let mut samples: Vec<Sample> = (0..=n0).into_par_iter().map(|i| eval(i as f64 / n0 as f64)).collect::<Result<Vec<_>>>()?;
    for _round in 0..40 {
        let split: Vec<usize> =
            (0..samples.len() - 1).filter(|&i| samples[i + 1].det.ln_ratio(&samples[i].det).im.abs() >= FRAC_PI_4).collect();
        if split.is_empty() {
            let angle = samples.windows(2).map(|w| w[1].det.ln_ratio(&w[0].det).im).sum();
            let worst = samples.iter().min_by(|a, b| a.det.ln_abs.total_cmp(&b.det.ln_abs)).cloned().expect("samples");
            return Ok((angle, worst));
        }
        let mids: Vec<Sample> =
            split.par_iter().map(|&i| eval(0.5 * (samples[i].t + samples[i + 1].t))).collect::<Result<Vec<_>>>()?;
        for s in &mids {
            let gap = split.iter().map(|&i| samples[i + 1].t - samples[i].t).fold(f64::INFINITY, f64::min);
            if gap < 1e-13 {
                return Err(Error::OnContour { re: s.z.re, im: s.z.im });
            }
        }
        samples.extend(mids);
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
    }
    Err(Error::Refinement("argument increments not resolved after 40 bisection rounds".into()))
}

/// Winding number of z ↦ det F(z) along the contour (plain determinant).
pub fn index_along_contour<F: OperatorFamily + ?Sized>(fam: &F, contour: &Contour) -> Result<i64> {
    let mut total = 0.0;
    let mut worst: Option<Sample> = None;
    for lp in &contour.loops {
        for seg in lp {
            let (angle, w) = segment_winding(fam, seg, contour.samples.max(4))?;
            total += angle;
            if worst.as_ref().map_or(true, |x| w.det.ln_abs < x.det.ln_abs) {
                worst = Some(w);
            }
        }
    }
    if let Some(w) = worst {
        if min_singular_value(&fam.eval(w.z)?) < 1e-10 {
            return Err(Error::OnContour { re: w.z.re, im: w.z.im });
        }
    }
    let turns = total / TAU;
    let n = turns.round();
    if (turns - n).abs() > 0.1 {
        return Err(Error::Refinement(format!("non-integer winding {turns:.4}")));
    }
    Ok(n as i64)
}

/// Cauchy-Riemann residual of ln det F at z, relative to |d ln det / dz|.
pub fn analyticity_residual<F: OperatorFamily + ?Sized>(fam: &F, z: Complex64, h: f64) -> Result<f64> {
    let base = fam.log_det(z)?;
    let d = |dir: Complex64| -> Result<Complex64> {
        let v = |s: f64| -> Result<Complex64> { Ok(fam.log_det(z + dir * (s * h))?.ln_ratio(&base)) };
        Ok((8.0 * (v(1.0)? - v(-1.0)?) - (v(2.0)? - v(-2.0)?)) / (12.0 * h))
    };
    let dx = d(C1)?;
    let dy = d(Complex64::new(0.0, 1.0))?;
    let denom = dx.norm() + dy.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dy - Complex64::new(0.0, 1.0) * dx).norm() / denom)
}

/// Region {r_in < |z| < r_out, arg_lo < arg z < arg_hi} for the search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchRegion {
    pub r_in: f64,
    pub r_out: f64,
    pub arg_lo: f64,
    pub arg_hi: f64,
}

impl SearchRegion {
    pub fn annulus(r_in: f64, r_out: f64) -> Self {
        Self { r_in, r_out, arg_lo: -PI, arg_hi: PI }
    }

    pub fn sector(r_in: f64, r_out: f64, arg_lo: f64, arg_hi: f64) -> Self {
        Self { r_in, r_out, arg_lo, arg_hi }
    }

    pub fn is_full(&self) -> bool {
        self.arg_hi - self.arg_lo >= TAU - 1e-14
    }

    pub fn contains(&self, z: Complex64) -> bool {
        let r = z.norm();
        if !(r > self.r_in && r < self.r_out) {
            return false;
        }
        if self.is_full() {
            return true;
        }
        let mut a = z.arg();
        while a < self.arg_lo {
            a += TAU;
        }
        while a > self.arg_lo + TAU {
            a -= TAU;
        }
        a < self.arg_hi
    }

    pub fn boundary(&self) -> Result<Contour> {
        Contour::annular_sector(self.r_in, self.r_out, self.arg_lo, self.arg_hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub n_radial: usize,
    pub n_angular: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Radius of the multiplicity circle relative to |z0|.
    pub mult_radius: f64,
    pub max_refinements: usize,
    pub contour_samples: usize,
    /// Extra Newton starting points.
    pub seeds: Vec<Complex64>,
    pub check_analyticity: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            n_radial: 64,
            n_angular: 64,
            newton_tol: 1e-12,
            max_newton: 80,
            mult_radius: 1e-3,
            max_refinements: 2,
            contour_samples: 32,
            seeds: Vec::new(),
            check_analyticity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharValue {
    pub z: Complex64,
    pub multiplicity: i64,
    /// Several zeros closer than the multiplicity radius, merged.
    pub cluster: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharValueReport {
    pub values: Vec<CharValue>,
    /// Winding of det F along the region boundary.
    pub boundary_index: i64,
    /// Multiplicities add up to the boundary index.
    pub consistent: bool,
}

impl CharValueReport {
    pub fn total_multiplicity(&self) -> i64 {
        self.values.iter().map(|v| v.multiplicity).sum()
    }
}

/// Newton iteration on det F with step -1 / Tr(F^{-1} F').
pub fn newton_det<F: OperatorFamily + ?Sized>(fam: &F, z0: Complex64, tol: f64, max_iter: usize) -> Option<Complex64> {
    let mut z = z0;
    for _ in 0..max_iter {
        let f = fam.eval(z).ok()?;
        let fp = fam.derivative(z).ok()?;
        let lu = f.lu();
        let x = lu.solve(&fp)?;
        let tr = x.trace();
        if tr.norm() == 0.0 || !tr.re.is_finite() {
            return None;
        }
        let mut step = -C1 / tr;
        let cap = 0.5 * z.norm().max(1e-300);
        if step.norm() > cap {
            step *= cap / step.norm();
        }
        z += step;
        if !fam.in_domain(z) {
            return None;
        }
        if step.norm() <= tol * z.norm() {
            return Some(z);
        }
    }
    None
}

fn grid_minima<F: OperatorFamily + ?Sized>(fam: &F, region: &SearchRegion, nr: usize, na: usize) -> Result<Vec<Complex64>> {
    let lr_in = region.r_in.ln();
    let lr_out = region.r_out.ln();
    let full = region.is_full();
    let pt = |i: usize, j: usize| -> Complex64 {
        let r = (lr_in + (lr_out - lr_in) * (i as f64 + 0.5) / nr as f64).exp();
        let a = if full {
            region.arg_lo + TAU * j as f64 / na as f64
        } else {
            region.arg_lo + (region.arg_hi - region.arg_lo) * (j as f64 + 0.5) / na as f64
        };
        Complex64::from_polar(r, a)
    };
    let vals: Vec<f64> =
        (0..nr * na).into_par_iter().map(|k| fam.log_det(pt(k / na, k % na)).map(|d| d.ln_abs)).collect::<Result<Vec<_>>>()?;
    let at = |i: usize, j: usize| vals[i * na + j];
    let mut minima = Vec::new();
    for i in 0..nr {
        for j in 0..na {
            let v = at(i, j);
            let mut is_min = true;
            'nb: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let ii = i as i64 + di;
                    let mut jj = j as i64 + dj;
                    if ii < 0 || ii >= nr as i64 {
                        continue;
                    }
                    if full {
                        jj = jj.rem_euclid(na as i64);
                    } else if jj < 0 || jj >= na as i64 {
                        continue;
                    }
                    if at(ii as usize, jj as usize) < v {
                        is_min = false;
                        break 'nb;
                    }
                }
            }
            if is_min {
                minima.push((v, pt(i, j)));
            }
        }
    }
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(minima.into_iter().map(|m| m.1).collect())
}

/// Characteristic values of the family inside the region, with multiplicities.
pub fn characteristic_values<F: OperatorFamily + ?Sized>(
    fam: &F,
    region: &SearchRegion,
    opts: &SearchOptions,
) -> Result<CharValueReport> {
    if region.r_in <= 0.0 {
        return Err(Error::InvalidInput("search region must exclude 0".into()));
    }
    let boundary = region.boundary()?.with_samples(opts.contour_samples);
    let total = index_along_contour(fam, &boundary)?;
    if total == 0 {
        return Ok(CharValueReport { values: Vec::new(), boundary_index: 0, consistent: true });
    }
    if opts.check_analyticity {
        let mid = (region.r_in * region.r_out).sqrt();
        let a = if region.is_full() { region.arg_lo + 0.3 } else { 0.5 * (region.arg_lo + region.arg_hi) };
        let z = Complex64::from_polar(mid, a);
        let res = analyticity_residual(fam, z, 1e-3 * mid)?;
        if res > 1e-6 {
            return Err(Error::Consistency(format!("family fails the Cauchy-Riemann check (residual {res:.2e})")));
        }
    }
    let mut found: Vec<Complex64> = Vec::new();
    let mut values: Vec<CharValue> = Vec::new();
    let (mut nr, mut na) = (opts.n_radial.max(2), opts.n_angular.max(2));
    // seeds alone first; the grid only if they miss part of the winding
    let seeded = !opts.seeds.is_empty();
    let mut starts: Vec<Complex64> = opts.seeds.clone();
    for attempt in 0..=opts.max_refinements + usize::from(seeded) {
        if !(seeded && attempt == 0) {
            starts.extend(grid_minima(fam, region, nr, na)?);
        }
        let roots: Vec<Option<Complex64>> =
            starts.par_iter().map(|&s| newton_det(fam, s, opts.newton_tol, opts.max_newton)).collect();
        for z in roots.into_iter().flatten() {
            if !region.contains(z) {
                continue;
            }
            if found.iter().any(|w| (z - w).norm() <= 1e-7 * z.norm()) {
                continue;
            }
            found.push(z);
        }
        values = multiplicities(fam, &found, opts.mult_radius)?;
        if values.iter().map(|v| v.multiplicity).sum::<i64>() == total {
            return Ok(CharValueReport { values, boundary_index: total, consistent: true });
        }
        starts.clear();
        if !(seeded && attempt == 0) {
            nr *= 2;
            na *= 2;
        }
    }
    Ok(CharValueReport { values, boundary_index: total, consistent: false })
}

/// Characteristic values enclosed by an arbitrary contour: Newton from the
/// seeds and from a grid over the bounding box, checked against the winding.
pub fn zeros_inside<F: OperatorFamily + ?Sized>(fam: &F, contour: &Contour, opts: &SearchOptions) -> Result<CharValueReport> {
    let total = index_along_contour(fam, contour)?;
    if total == 0 {
        return Ok(CharValueReport { values: Vec::new(), boundary_index: 0, consistent: true });
    }
    let pts: Vec<Complex64> = contour.loops.iter().flatten().flat_map(|s| (0..=16).map(move |i| s.at(i as f64 / 16.0))).collect();
    let (lo_re, hi_re) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, z| (a.0.min(z.re), a.1.max(z.re)));
    let (lo_im, hi_im) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, z| (a.0.min(z.im), a.1.max(z.im)));
    let mut n = opts.n_radial.max(4);
    let mut starts: Vec<Complex64> = opts.seeds.iter().copied().filter(|z| contour.contains(*z)).collect();
    let seeded = !starts.is_empty();
    let mut found: Vec<Complex64> = Vec::new();
    let mut values = Vec::new();
    for attempt in 0..=opts.max_refinements + usize::from(seeded) {
        let use_grid = !(seeded && attempt == 0);
        for i in 0..if use_grid { n } else { 0 } {
            for j in 0..n {
                let z = Complex64::new(
                    lo_re + (hi_re - lo_re) * (i as f64 + 0.5) / n as f64,
                    lo_im + (hi_im - lo_im) * (j as f64 + 0.5) / n as f64,
                );
                if fam.in_domain(z) && contour.contains(z) {
                    starts.push(z);
                }
            }
        }
        let roots: Vec<Option<Complex64>> =
            starts.par_iter().map(|&s| newton_det(fam, s, opts.newton_tol, opts.max_newton)).collect();
        for z in roots.into_iter().flatten() {
            if contour.contains(z) && !found.iter().any(|w| (z - w).norm() <= 1e-7 * z.norm()) {
                found.push(z);
            }
        }
        values = multiplicities(fam, &found, opts.mult_radius)?;
        if values.iter().map(|v| v.multiplicity).sum::<i64>() == total {
            return Ok(CharValueReport { values, boundary_index: total, consistent: true });
        }
        starts.clear();
        if use_grid {
            n *= 2;
        }
    }
    Ok(CharValueReport { values, boundary_index: total, consistent: false })
}

fn multiplicities<F: OperatorFamily + ?Sized>(fam: &F, roots: &[Complex64], rel_radius: f64) -> Result<Vec<CharValue>> {
    let mut sorted: Vec<Complex64> = roots.to_vec();
    sorted.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let mut groups: Vec<(Complex64, usize)> = Vec::new();
    for z in sorted {
        if let Some(g) = groups.iter_mut().find(|g| (g.0 - z).norm() < 2.0 * rel_radius * z.norm()) {
            g.1 += 1;
        } else {
            groups.push((z, 1));
        }
    }
    groups
        .par_iter()
        .map(|&(z, members)| {
            let rho = rel_radius * z.norm();
            let m = index_along_contour(fam, &Contour::circle(z, rho).with_samples(32))?;
            Ok(CharValue { z, multiplicity: m, cluster: members > 1 })
        })
        .collect()
}

/// Jensen diagnostic: mean of ln|g| over equally spaced boundary samples minus ln|g(λ0)|.
pub fn jensen_zero_bound(boundary: &[Complex64], interior: Complex64) -> Result<f64> {
    if boundary.is_empty() {
        return Err(Error::InvalidInput("no boundary samples".into()));
    }
    if boundary.iter().any(|g| g.norm() == 0.0) || interior.norm() == 0.0 {
        return Err(Error::InvalidInput("zero on the boundary or at the interior point".into()));
    }
    let mean = boundary.iter().map(|g| g.norm().ln()).sum::<f64>() / boundary.len() as f64;
    Ok(mean - interior.norm().ln())
}

/// Zero-count bound in the disk of radius `inner` from a Jensen value on radius `outer`.
pub fn jensen_count_bound(jensen: f64, inner: f64, outer: f64) -> f64 {
    jensen / (outer / inner).ln()
}

/// Dense identity of the given size.
pub fn identity(n: usize) -> CMatrix {
    DMatrix::identity(n, n)
}

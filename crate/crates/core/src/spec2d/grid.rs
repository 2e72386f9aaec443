//! Finite-difference Pauli operator on a Dirichlet box with Peierls phases,
//! used as an independent oracle.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::ZeroModeBasis;
use crate::detindex;
use crate::field::AdmissibleField;
use crate::potential::MatrixPotential;
use crate::{CMatrix, Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Spin component: `Down` carries -b on the diagonal and holds the zero modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GridBlock {
    Down,
    Up,
}

/// 5-point magnetic Laplacian on an N×N interior grid of a square box.
#[derive(Debug, Clone)]
pub struct GridPauli2D {
    pub n: usize,
    pub box_size: f64,
    pub h: f64,
    /// e^{-iθ} for the hop (i,j) → (i+1,j), indexed by the left site.
    hop_x: Vec<Complex64>,
    /// e^{-iθ} for the hop (i,j) → (i,j+1), indexed by the lower site.
    hop_y: Vec<Complex64>,
    diag_down: Vec<Complex64>,
    diag_up: Vec<Complex64>,
    pub hermitian: bool,
}

impl GridPauli2D {
    pub fn new(field: &AdmissibleField, pot: Option<&MatrixPotential>, box_size: f64, n: usize) -> Result<Self> {
        if n < 4 || !(box_size > 0.0) {
            return Err(Error::InvalidInput("grid needs n >= 4 and a positive box size".into()));
        }
        let edge = field.total_phi(0.5 * box_size)?;
        if (-edge).exp() >= 1e-8 {
            return Err(Error::InvalidInput(format!(
                "box too small: e^(-phi) = {:.2e} at the boundary (need < 1e-8)",
                (-edge).exp()
            )));
        }
        if let Some(p) = pot {
            if p.dim() != 2 {
                return Err(Error::InvalidInput("grid oracle is two-dimensional".into()));
            }
            let couples = (0..200).any(|i| {
                let v = p.v_at(0.05 * i as f64, 0.0, 0.0);
                v[(0, 1)].norm() > 0.0 || v[(1, 0)].norm() > 0.0
            });
            if couples {
                return Err(Error::InvalidInput("grid oracle supports diagonal potentials only".into()));
            }
        }
        let h = box_size / (n + 1) as f64;
        let coord = |i: usize| -0.5 * box_size + (i + 1) as f64 * h;
        // A = (-∂_y φ, ∂_x φ) for radial φ
        let vec_pot = |x: f64, y: f64| -> (f64, f64) {
            let r = (x * x + y * y).sqrt();
            let s = if r > 0.0 { field.dphi(r) / r } else { 0.0 };
            (-s * y, s * x)
        };
        let size = n * n;
        let mut hop_x = vec![Complex64::new(0.0, 0.0); size];
        let mut hop_y = vec![Complex64::new(0.0, 0.0); size];
        let mut diag_down = vec![Complex64::new(0.0, 0.0); size];
        let mut diag_up = vec![Complex64::new(0.0, 0.0); size];
        let lap = 4.0 / (h * h);
        for j in 0..n {
            for i in 0..n {
                let p = i + n * j;
                let (x, y) = (coord(i), coord(j));
                let ax = vec_pot(x + 0.5 * h, y).0;
                let ay = vec_pot(x, y + 0.5 * h).1;
                hop_x[p] = (-I * (ax * h)).exp();
                hop_y[p] = (-I * (ay * h)).exp();
                let b = field.b((x * x + y * y).sqrt());
                let (vd, vu) = match pot {
                    Some(pt) => {
                        let v = pt.v_at(x, y, 0.0);
                        (v[(0, 0)], v[(1, 1)])
                    }
                    None => (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
                };
                diag_down[p] = Complex64::new(lap - b, 0.0) + vd;
                diag_up[p] = Complex64::new(lap + b, 0.0) + vu;
            }
        }
        let hermitian = diag_down.iter().chain(&diag_up).all(|d| d.im == 0.0);
        Ok(Self { n, box_size, h, hop_x, hop_y, diag_down, diag_up, hermitian })
    }

    pub fn size(&self) -> usize {
        self.n * self.n
    }

    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.box_size + (i + 1) as f64 * self.h
    }

    fn diag(&self, block: GridBlock) -> &[Complex64] {
        match block {
            GridBlock::Down => &self.diag_down,
            GridBlock::Up => &self.diag_up,
        }
    }

    /// Matrix entries of the row of site p, as (column, value).
    fn row(&self, block: GridBlock, p: usize, mut emit: impl FnMut(usize, Complex64)) {
        let n = self.n;
        let t = 1.0 / (self.h * self.h);
        let (i, j) = (p % n, p / n);
        emit(p, self.diag(block)[p]);
        if i + 1 < n {
            emit(p + 1, -self.hop_x[p] * t);
        }
        if i > 0 {
            emit(p - 1, -self.hop_x[p - 1].conj() * t);
        }
        if j + 1 < n {
            emit(p + n, -self.hop_y[p] * t);
        }
        if j > 0 {
            emit(p - n, -self.hop_y[p - n].conj() * t);
        }
    }

    pub fn apply(&self, block: GridBlock, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.size())
            .into_par_iter()
            .map(|p| {
                let mut acc = Complex64::new(0.0, 0.0);
                self.row(block, p, |q, v| acc += v * x[q]);
                acc
            })
            .collect()
    }

    /// Dense matrix of one block (small grids only).
    pub fn dense(&self, block: GridBlock) -> CMatrix {
        let m = self.size();
        let mut a = CMatrix::zeros(m, m);
        for p in 0..m {
            self.row(block, p, |q, v| a[(p, q)] += v);
        }
        a
    }

    /// Band LU of (H - σ) without pivoting.
    pub fn factor_shifted(&self, block: GridBlock, sigma: Complex64) -> Result<BandLu> {
        let m = self.size();
        let mut lu = BandLu::zeros(m, self.n);
        for p in 0..m {
            self.row(block, p, |q, v| *lu.at_mut(p, q) += v);
            *lu.at_mut(p, p) -= sigma;
        }
        lu.factor()?;
        Ok(lu)
    }

    /// Grid samples of ψ_k, scaled to unit discrete norm.
    pub fn sample_mode(&self, basis: &ZeroModeBasis, k: usize) -> Vec<Complex64> {
        let n = self.n;
        let mut v: Vec<Complex64> = (0..n * n).map(|p| basis.mode_value(k, self.coord(p % n), self.coord(p / n))).collect();
        normalize(&mut v);
        v
    }

    /// Shift-invert subspace iteration with Rayleigh-Ritz on the final basis.
    pub fn eigenvalues_near(
        &self,
        block: GridBlock,
        sigma: Complex64,
        start: Vec<Vec<Complex64>>,
        max_iter: usize,
        tol: f64,
    ) -> Result<GridSpectrum> {
        if start.is_empty() {
            return Err(Error::InvalidInput("no start vectors".into()));
        }
        let lu = self.factor_shifted(block, sigma)?;
        self.eigenvalues_with(block, &lu, sigma, start, max_iter, tol)
    }

    /// As [`Self::eigenvalues_near`], reusing a factorization of H - σ.
    pub fn eigenvalues_with(
        &self,
        block: GridBlock,
        lu: &BandLu,
        sigma: Complex64,
        start: Vec<Vec<Complex64>>,
        max_iter: usize,
        tol: f64,
    ) -> Result<GridSpectrum> {
        if start.is_empty() {
            return Err(Error::InvalidInput("no start vectors".into()));
        }
        let mut q = orthonormalize(start);
        let mut prev: Vec<Complex64> = Vec::new();
        let mut iterations = 0;
        let mut ritz = Vec::new();
        for it in 0..max_iter {
            iterations = it + 1;
            let y: Vec<Vec<Complex64>> = q.par_iter().map(|v| lu.solve(v)).collect();
            q = orthonormalize(y);
            ritz = self.ritz_values(block, &q)?;
            let done = prev.len() == ritz.len() && ritz.iter().zip(&prev).all(|(a, b)| (a - b).norm() <= tol * a.norm().max(1.0));
            if done {
                break;
            }
            prev = ritz.clone();
        }
        let residuals = if self.hermitian { self.ritz_residuals(block, &q)? } else { Vec::new() };
        Ok(GridSpectrum { block, sigma, ritz, residuals, iterations })
    }

    fn projected(&self, block: GridBlock, q: &[Vec<Complex64>]) -> CMatrix {
        let hq: Vec<Vec<Complex64>> = q.iter().map(|v| self.apply(block, v)).collect();
        let m = q.len();
        CMatrix::from_fn(m, m, |a, b| dot(&q[a], &hq[b]))
    }

    fn ritz_values(&self, block: GridBlock, q: &[Vec<Complex64>]) -> Result<Vec<Complex64>> {
        let small = self.projected(block, q);
        let mut ev = if self.hermitian {
            let h = (&small + small.adjoint()) * Complex64::new(0.5, 0.0);
            SymmetricEigen::new(h).eigenvalues.iter().map(|&l| Complex64::new(l, 0.0)).collect()
        } else {
            detindex::eigenvalues(&small)?
        };
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        Ok(ev)
    }

    fn ritz_residuals(&self, block: GridBlock, q: &[Vec<Complex64>]) -> Result<Vec<f64>> {
        let small = self.projected(block, q);
        let h = (&small + small.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..q.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        Ok(order
            .into_iter()
            .map(|c| {
                let mut x = vec![Complex64::new(0.0, 0.0); self.size()];
                for (a, v) in q.iter().enumerate() {
                    let coef = eig.eigenvectors[(a, c)];
                    for (xi, vi) in x.iter_mut().zip(v) {
                        *xi += coef * vi;
                    }
                }
                let hx = self.apply(block, &x);
                let lam = eig.eigenvalues[c];
                hx.iter().zip(&x).map(|(a, b)| (a - b * lam).norm_sqr()).sum::<f64>().sqrt()
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpectrum {
    pub block: GridBlock,
    pub sigma: Complex64,
    /// Ritz values sorted by real part.
    pub ritz: Vec<Complex64>,
    /// Residual norms of the Ritz pairs (Hermitian blocks only).
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Band matrix with equal lower and upper bandwidth, LU-factored in place.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    bw: usize,
    data: Vec<Complex64>,
}

impl BandLu {
    fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![Complex64::new(0.0, 0.0); n * (2 * bw + 1)] }
    }

    fn width(&self) -> usize {
        2 * self.bw + 1
    }

    fn at_mut(&mut self, i: usize, j: usize) -> &mut Complex64 {
        let w = self.width();
        &mut self.data[i * w + (j + self.bw - i)]
    }

    fn factor(&mut self) -> Result<()> {
        let (n, bw, w) = (self.n, self.bw, self.width());
        for k in 0..n {
            let pivot = self.data[k * w + bw];
            if pivot.norm() < 1e-300 {
                return Err(Error::LinearAlgebra(format!("zero pivot at row {k}; shift is an eigenvalue")));
            }
            let last = (k + bw).min(n - 1);
            let (head, tail) = self.data.split_at_mut((k + 1) * w);
            let row_k = &head[k * w + bw + 1..k * w + bw + 1 + (last - k)];
            for i in k + 1..=last {
                let row_i = &mut tail[(i - k - 1) * w..(i - k) * w];
                let col = k + bw - i;
                let l = row_i[col] / pivot;
                row_i[col] = l;
                if l.norm() == 0.0 {
                    continue;
                }
                let start = col + 1;
                for (a, b) in row_i[start..start + (last - k)].iter_mut().zip(row_k) {
                    *a -= l * b;
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let (n, bw, w) = (self.n, self.bw, self.width());
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &self.data[i * w + (lo + bw - i)..i * w + bw];
            let acc = row.iter().zip(&x[lo..i]).fold(x[i], |acc, (l, xj)| acc - l * xj);
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let row = &self.data[i * w + bw + 1..i * w + bw + 1 + (hi - i)];
            let acc = row.iter().zip(&x[i + 1..=hi]).fold(x[i], |acc, (u, xj)| acc - u * xj);
            x[i] = acc / self.data[i * w + bw];
        }
        x
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn normalize(v: &mut [Complex64]) {
    let s = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// Modified Gram-Schmidt, applied twice.
fn orthonormalize(mut vs: Vec<Vec<Complex64>>) -> Vec<Vec<Complex64>> {
    for _pass in 0..2 {
        for k in 0..vs.len() {
            let (done, rest) = vs.split_at_mut(k);
            let v = &mut rest[0];
            for u in done.iter() {
                let c = dot(u, v);
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= c * y;
                }
            }
            normalize(v);
        }
    }
    vs
}

/// Number of spin-down eigenvalues below `threshold` on a small dense grid.
pub fn flux_count(field: &AdmissibleField, box_size: f64, n: usize, threshold: f64) -> Result<usize> {
    let g = GridPauli2D::new(field, None, box_size, n)?;
    let a = g.dense(GridBlock::Down);
    let h: DMatrix<Complex64> = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    Ok(eig.eigenvalues.iter().filter(|&&l| l < threshold).count())
}

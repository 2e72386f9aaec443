//! Three-dimensional engine: k-plane geometry, one-dimensional resolvent
//! kernels, the weighted Birman-Schwinger family in k, and the checks built
//! on it (sector-free region, accumulation ray, threshold ε₀, half rings).
//!
//! The field is constant along X∥; the potential is separable,
//! W(x, y, X∥) = W⊥(r) g(X∥). Transverse directions use the Landau sector
//! bases of the 2D engine, the longitudinal direction a trapezoid grid
//! compressed onto a small orthonormal frame whose first vector is g^{1/2}.

mod checks;

pub use checks::*;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{build_zero_modes, ZeroModeBasis};
use crate::detindex::OperatorFamily;
use crate::field::AdmissibleField;
use crate::landau::{SectorBasis, WeightedFactor};
use crate::potential::MatrixPotential;
use crate::quad;
use crate::special::{expm1, sqrt_upper};
use crate::toeplitz::{self, Symbol, ToeplitzOperator};
use crate::{CMatrix, Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);
const CACHE_LIMIT: usize = 4096;

/// Which half plane k lives in: + is the first quadrant, - the fourth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    /// Branch whose quarter plane holds the leading characteristic values
    /// for this η, if any: Arg η in (π/2, π) gives +, (-π, -π/2) gives -.
    pub fn accumulating(eta: Complex64) -> Option<Branch> {
        let a = eta.arg();
        if a > 0.5 * PI && a < PI {
            Some(Branch::Plus)
        } else if a < -0.5 * PI && a > -PI {
            Some(Branch::Minus)
        } else {
            None
        }
    }

    /// Arguments of the closed quarter plane.
    pub fn arg_range(self) -> (f64, f64) {
        match self {
            Branch::Plus => (0.0, 0.5 * PI),
            Branch::Minus => (-0.5 * PI, 0.0),
        }
    }
}

/// Shortest distance between two angles.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Regions of the k and z planes near the bottom of the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KPlaneGeometry {
    pub kappa: f64,
    pub zeta: f64,
}

impl KPlaneGeometry {
    pub fn new(kappa: f64, zeta: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa * kappa < zeta) {
            return Err(Error::InvalidInput(format!("need 0 < κ < √ζ = {:.4}", zeta.sqrt())));
        }
        Ok(Self { kappa, zeta })
    }

    pub fn z_of(k: Complex64) -> Complex64 {
        k * k
    }

    /// Preimage of z in the branch's quarter plane.
    pub fn k_of(z: Complex64, branch: Branch) -> Complex64 {
        sqrt_upper(z) * branch.sign()
    }

    /// k in the open quarter disk of radius κ.
    pub fn in_d_star(&self, k: Complex64, branch: Branch) -> bool {
        let n = k.norm();
        k.re > 0.0 && branch.sign() * k.im > 0.0 && n > 0.0 && n < self.kappa
    }

    /// ϱ₁ < |z| < ϱ₂ and ±Im z > 0.
    pub fn in_half_ring(z: Complex64, branch: Branch, r1: f64, r2: f64) -> bool {
        let n = z.norm();
        n > r1 && n < r2 && branch.sign() * z.im > 0.0
    }

    /// Half ring with |Im z| > ν.
    pub fn in_clipped_ring(z: Complex64, branch: Branch, r1: f64, r2: f64, nu: f64) -> bool {
        Self::in_half_ring(z, branch, r1, r2) && z.im.abs() > nu
    }

    /// z in the disk of radius ζ outside the open sector of half-angle 2θ
    /// around the ray of argument 2α ∓ π.
    pub fn in_e_sector(&self, z: Complex64, branch: Branch, alpha: f64, theta: f64) -> bool {
        let ray = 2.0 * alpha - branch.sign() * PI;
        z.norm() < self.zeta && (z.norm() == 0.0 || angular_distance(z.arg(), ray) >= 2.0 * theta)
    }

    /// -δ Im k ≤ |Re k|.
    pub fn in_c_delta(k: Complex64, delta: f64) -> bool {
        -delta * k.im <= k.re.abs()
    }
}

/// Kernel of (-d²/dX² - z)^{-1} on the line:
/// -e^{i√z|X-X'|}/(2i√z), with the boundary value from above on (0, ∞).
pub fn resolvent_kernel_1d(z: Complex64, x: f64, xp: f64) -> Result<Complex64> {
    if z.norm() == 0.0 {
        return Err(Error::InvalidInput("the one-dimensional resolvent kernel is singular at z = 0".into()));
    }
    let q = sqrt_upper(z);
    Ok(q_kernel(q, (x - xp).abs()))
}

/// i e^{iq d}/(2q).
fn q_kernel(q: Complex64, d: f64) -> Complex64 {
    I * (I * q * d).exp() / (2.0 * q)
}

/// Regular part of the zero-mode kernel after removing its pole at s = 0:
/// i (e^{isd} - 1)/(2s); s = k on the + branch and -k on the - branch.
pub fn s_kernel(s: Complex64, d: f64) -> Complex64 {
    I * expm1(I * s * d) / (2.0 * s)
}

/// Trapezoid grid on [-X_max, X_max] and an orthonormal frame of weighted
/// vectors whose first column is √ω g^{1/2}.
#[derive(Debug, Clone)]
pub struct LongitudinalGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub step: f64,
    /// √ω_i g(X_i)^{1/2}.
    pub cw: Vec<f64>,
    /// N × M, orthonormal columns.
    pub frame: DMatrix<f64>,
    /// Σ ω g, the discrete ∫ g.
    pub mass: f64,
    /// diag(cw) · frame, row-major N × M.
    cf: Vec<f64>,
}

impl LongitudinalGrid {
    pub fn new(pot: &MatrixPotential, x_max: f64, n: usize, m: usize) -> Result<Self> {
        if n < 3 || n % 2 == 0 || m == 0 || !(x_max > 0.0) {
            return Err(Error::InvalidInput("longitudinal grid needs an odd point count ≥ 3, M ≥ 1 and X_max > 0".into()));
        }
        let half = pot.half_integral_g()?;
        let tail = quad::adaptive_semi_infinite(|t| pot.g(t), x_max, 1e-10, 1e-300)?;
        if tail > 1e-10 * half {
            return Err(Error::InvalidInput(format!(
                "longitudinal mass beyond X_max = {x_max} is {:.2e} of the total; increase X_max",
                tail / half
            )));
        }
        let step = 2.0 * x_max / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|i| -x_max + step * i as f64).collect();
        let weights: Vec<f64> = (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * step } else { step }).collect();
        let cw: Vec<f64> = nodes.iter().zip(&weights).map(|(&x, &w)| (w * pot.g(x)).sqrt()).collect();
        let mass: f64 = cw.iter().map(|c| c * c).sum();
        if mass <= 0.0 {
            return Err(Error::InvalidInput("longitudinal factor vanishes on the grid".into()));
        }
        if (mass / (2.0 * half) - 1.0).abs() > 1e-6 {
            return Err(Error::Quadrature(format!(
                "trapezoid ∫g off by {:.2e} relative; increase the longitudinal point count",
                mass / (2.0 * half) - 1.0
            )));
        }
        let frame = weighted_legendre_frame(&nodes, &cw, x_max, m);
        let mc = frame.ncols();
        let mut cf = vec![0.0; n * mc];
        for i in 0..n {
            for a in 0..mc {
                cf[i * mc + a] = cw[i] * frame[(i, a)];
            }
        }
        Ok(Self { nodes, weights, step, cw, frame, mass, cf })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn frame_dim(&self) -> usize {
        self.frame.ncols()
    }

    /// Fᵀ diag(cw) T diag(cw) F for the translation-invariant kernel t(|X - X'|).
    pub fn compress(&self, kernel: impl Fn(f64) -> Complex64) -> CMatrix {
        let n = self.len();
        let m = self.frame_dim();
        let t: Vec<Complex64> = (0..n).map(|d| kernel(self.step * d as f64)).collect();
        let mut b = vec![Complex64::new(0.0, 0.0); n * m];
        for i in 0..n {
            let row = &mut b[i * m..(i + 1) * m];
            for j in 0..n {
                let tij = t[i.abs_diff(j)];
                let src = &self.cf[j * m..(j + 1) * m];
                for a in 0..m {
                    row[a] += tij * src[a];
                }
            }
        }
        let mut out = CMatrix::zeros(m, m);
        for i in 0..n {
            for a in 0..m {
                let c = self.cf[i * m + a];
                if c == 0.0 {
                    continue;
                }
                for bb in 0..m {
                    out[(a, bb)] += b[i * m + bb] * c;
                }
            }
        }
        out
    }
}

/// Orthonormalized columns cw(X) P_a(X / X_max), Gram-Schmidt applied twice.
fn weighted_legendre_frame(nodes: &[f64], cw: &[f64], x_max: f64, m: usize) -> DMatrix<f64> {
    let n = nodes.len();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    for a in 0..m {
        let mut v: Vec<f64> = nodes.iter().zip(cw).map(|(&x, &c)| c * legendre(a, x / x_max)).collect();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..2 {
            for c in &cols {
                let p: f64 = v.iter().zip(c).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 * norm0 {
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
        }
    }
    DMatrix::from_fn(n, cols.len(), |i, a| cols[a][i])
}

fn legendre(n: usize, t: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, t);
    if n == 0 {
        return p0;
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * t * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model3DOptions {
    pub k_count: usize,
    /// Landau levels per spin component kept in the excited-level resolvent.
    pub levels: usize,
    pub quad_order: usize,
    pub basis_order: usize,
    pub x_max: f64,
    pub n_par: usize,
    /// Size of the longitudinal frame.
    pub m_x: usize,
    pub rel_cut: f64,
    pub leading_order: bool,
    /// Radius of the k quarter disk; 0.5 √ζ when absent.
    pub kappa: Option<f64>,
}

impl Default for Model3DOptions {
    fn default() -> Self {
        Self {
            k_count: 16,
            levels: 6,
            quad_order: 32,
            basis_order: 256,
            x_max: 8.0,
            n_par: 257,
            m_x: 12,
            rel_cut: 1e-13,
            leading_order: false,
            kappa: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sector3D {
    pub ell: usize,
    pub energies: Vec<f64>,
    pub factor: Option<WeightedFactor>,
    /// ⟨ψ_ℓ, W⊥₁₁ ψ_ℓ⟩.
    pub lowest: f64,
    /// ⟨ψ_ℓ, |W⊥|₁₁ ψ_ℓ⟩.
    pub lowest_abs: f64,
}

/// Longitudinal blocks at one k: the regular zero-mode part and one block
/// per excited level 2 b0 m, m = 1..=L.
#[derive(Debug)]
pub struct KBlocks {
    pub s: Complex64,
    pub lll_regular: CMatrix,
    pub excited: Vec<CMatrix>,
}

type CacheKey = (u64, u64, Branch);

pub struct Pauli3DModel {
    pub field: AdmissibleField,
    pub basis: ZeroModeBasis,
    pub pot: MatrixPotential,
    pub opts: Model3DOptions,
    pub grid: LongitudinalGrid,
    pub sectors: Vec<Sector3D>,
    pub full: bool,
    pub geometry: KPlaneGeometry,
    cache: Mutex<HashMap<CacheKey, Arc<KBlocks>>>,
}

impl std::fmt::Debug for Pauli3DModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pauli3DModel")
            .field("opts", &self.opts)
            .field("sectors", &self.sectors.len())
            .field("full", &self.full)
            .finish()
    }
}

impl Pauli3DModel {
    pub fn new(field: AdmissibleField, pot: MatrixPotential, opts: Model3DOptions) -> Result<Self> {
        if pot.dim() != 3 {
            return Err(Error::InvalidInput("spec3d needs a potential with a longitudinal factor".into()));
        }
        pot.validate()?;
        let basis = build_zero_modes(&field, opts.k_count, opts.basis_order)?;
        let grid = LongitudinalGrid::new(&pot, opts.x_max, opts.n_par, opts.m_x)?;
        let full = field.is_constant() && !opts.leading_order;
        let breaks = pot.shape.breakpoints();
        let w11 = |r: f64| pot.shape.at(r)[(0, 0)].re;
        let abs11 = |r: f64| crate::potential::abs_hermitian(&pot.shape.at(r))[(0, 0)].re;
        let sectors = (0..opts.k_count)
            .into_par_iter()
            .map(|ell| -> Result<Sector3D> {
                if field.is_constant() {
                    let levels = if full { opts.levels } else { 1 };
                    let sb = SectorBasis::new(field.b0, ell, levels, &breaks, opts.quad_order)?;
                    let w = sb.galerkin_shape(&pot.shape);
                    let wa = sb.galerkin_abs_shape(&pot.shape);
                    let factor = WeightedFactor::new(&w, &wa, opts.rel_cut)?;
                    Ok(Sector3D {
                        ell,
                        energies: sb.energies(),
                        factor: Some(factor),
                        lowest: w[(0, 0)].re,
                        lowest_abs: wa[(0, 0)].re,
                    })
                } else {
                    let rule = basis.mode_rule(ell, &breaks);
                    Ok(Sector3D {
                        ell,
                        energies: Vec::new(),
                        factor: None,
                        lowest: rule.expectation(w11),
                        lowest_abs: rule.expectation(abs11),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let zeta = field.zeta;
        let geometry = KPlaneGeometry::new(opts.kappa.unwrap_or(0.5 * zeta.sqrt()), zeta)?;
        Ok(Self { field, basis, pot, opts, grid, sectors, full, geometry, cache: Mutex::new(HashMap::new()) })
    }

    pub fn zeta(&self) -> f64 {
        self.field.zeta
    }

    pub fn eps(&self) -> f64 {
        self.pot.coupling
    }

    pub fn kappa(&self) -> f64 {
        self.geometry.kappa
    }

    /// ‖c‖²/2 = ½ ∫ g on the grid.
    pub fn half_mass(&self) -> f64 {
        0.5 * self.grid.mass
    }

    /// μ_ℓ: eigenvalue of p𝐖₁₁p carried by sector ℓ.
    pub fn b_eigenvalues(&self) -> Vec<f64> {
        self.sectors.iter().map(|s| self.half_mass() * s.lowest_abs).collect()
    }

    /// Leading-order characteristic value of sector ℓ: s = -iεη μ_ℓ.
    pub fn leading_prediction(&self, ell: usize, eta: Complex64, branch: Branch) -> Complex64 {
        let s = -I * eta * (self.eps() * self.half_mass() * self.sectors[ell].lowest);
        s * branch.sign()
    }

    /// Longitudinal blocks at k, cached.
    pub fn blocks(&self, k: Complex64, branch: Branch) -> Result<Arc<KBlocks>> {
        if k.norm() == 0.0 {
            return Err(Error::InvalidInput("k = 0 is outside the domain".into()));
        }
        let key = (k.re.to_bits(), k.im.to_bits(), branch);
        if let Some(b) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(b.clone());
        }
        let s = k * branch.sign();
        let z = k * k;
        let lll_regular = self.grid.compress(|d| s_kernel(s, d));
        let levels = if self.full { self.opts.levels } else { 0 };
        let excited = (1..=levels)
            .map(|m| {
                let q = sqrt_upper(z - 2.0 * self.field.b0 * m as f64);
                self.grid.compress(|d| q_kernel(q, d))
            })
            .collect();
        let blocks = Arc::new(KBlocks { s, lll_regular, excited });
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, blocks.clone());
        Ok(blocks)
    }

    pub fn family(&self, ell: usize, eta: Complex64, branch: Branch) -> Result<SectorFamily3D<'_>> {
        let sector = self.sectors.get(ell).ok_or_else(|| Error::InvalidInput(format!("sector {ell} not retained")))?;
        let outers = sector.factor.as_ref().map(|f| (0..f.u_sigma.nrows()).map(|i| f.outer(i, i)).collect()).unwrap_or_default();
        Ok(SectorFamily3D { model: self, sector, eta, branch, eps: self.eps(), leading: !self.full, outers })
    }

    /// I + (iεη/k) J ℬ on one sector.
    pub fn leading_family(&self, ell: usize, eta: Complex64, branch: Branch) -> Result<SectorFamily3D<'_>> {
        let mut f = self.family(ell, eta, branch)?;
        f.leading = true;
        Ok(f)
    }

    /// Toeplitz operator of 𝐕₁₁ = ½ ∫ |V|₁₁ dX∥ on the zero modes.
    pub fn toeplitz_v11(&self) -> Result<ToeplitzOperator> {
        toeplitz::assemble(&self.basis, &Symbol::Radial(self.pot.reduce_v11_3d()?))
    }

    /// Toeplitz operator of 𝐖₁₁ = ½ ∫ |W|₁₁ dX∥.
    pub fn toeplitz_w11(&self) -> Result<ToeplitzOperator> {
        toeplitz::assemble(&self.basis, &Symbol::Radial(self.pot.reduce_w11_3d()?))
    }
}

/// K restricted to each sector and the consistency of K K* with p𝐕₁₁p.
#[derive(Debug, Clone)]
pub struct KbAssembly {
    /// Row of K for each sector (1 × weighted dimension).
    pub k_rows: Vec<CMatrix>,
    /// K K* on the zero modes.
    pub kk_star: CMatrix,
    /// Nonzero eigenvalues of ℬ = K*K, descending.
    pub b_eigenvalues: Vec<f64>,
    /// max |K K* - p𝐕₁₁p| entry.
    pub identity_error: f64,
}

/// Assembles K = (1/√2)(p ⊗ c*) diag(1, 0) |V|^{1/2} in factor coordinates and
/// checks K K* against the Toeplitz matrix of 𝐕₁₁.
pub fn assemble_k_and_b(model: &Pauli3DModel) -> Result<KbAssembly> {
    let scale = (0.5 * model.eps() * model.pot.eta.norm() * model.grid.mass).sqrt();
    let m = model.grid.frame_dim();
    let n = model.sectors.len();
    let mut k_rows = Vec::with_capacity(n);
    let mut kk_star = CMatrix::zeros(n, n);
    for (ell, s) in model.sectors.iter().enumerate() {
        let row = match &s.factor {
            Some(f) => {
                let r = f.rank();
                let mut row = CMatrix::zeros(1, r * m);
                for a in 0..r {
                    row[(0, a * m)] = f.u_sigma[(0, a)] * scale;
                }
                row
            }
            None => {
                let mut row = CMatrix::zeros(1, 1);
                row[(0, 0)] = Complex64::new(scale * s.lowest_abs.max(0.0).sqrt(), 0.0);
                row
            }
        };
        kk_star[(ell, ell)] = (&row * row.adjoint())[(0, 0)];
        k_rows.push(row);
    }
    let reference = model.toeplitz_v11()?.matrix.to_dense();
    let identity_error = (&kk_star - &reference).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if identity_error > 1e-9 {
        return Err(Error::Consistency(format!("K K* differs from p𝐕₁₁p by {identity_error:.3e}")));
    }
    let mut b_eigenvalues: Vec<f64> = (0..n).map(|i| kk_star[(i, i)].re).filter(|v| *v > 0.0).collect();
    b_eigenvalues.sort_by(|a, b| b.total_cmp(a));
    Ok(KbAssembly { k_rows, kk_star, b_eigenvalues, identity_error })
}

/// k ↦ I + εη (J ⊗ 1) Σ_i (ΣU* e_i e_i* UΣ) ⊗ 𝒳_i(k) on one sector, where 𝒳
/// is the compressed longitudinal resolvent of level i. Its zero-mode block
/// splits into the pole (i/2s)‖c‖² e₀e₀ᵀ and the regular s-kernel.
pub struct SectorFamily3D<'a> {
    model: &'a Pauli3DModel,
    sector: &'a Sector3D,
    eta: Complex64,
    branch: Branch,
    eps: f64,
    leading: bool,
    outers: Vec<CMatrix>,
}

impl SectorFamily3D<'_> {
    /// Same family with another coupling ε.
    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    fn level_of(&self, i: usize) -> usize {
        let l = self.sector.energies.len() / 2;
        if i < l {
            i
        } else {
            i - l + 1
        }
    }

    /// Σ_i outer_i ⊗ 𝒳_i(k), optionally with the zero-mode pole.
    fn assemble(&self, k: Complex64, pole: bool, regular: bool) -> Result<CMatrix> {
        let f = self.sector.factor.as_ref().expect("constant-field sector");
        let m = self.model.grid.frame_dim();
        let r = f.rank();
        let blocks = self.model.blocks(k, self.branch)?;
        let mut y = CMatrix::zeros(r * m, r * m);
        let pole_coef = I / (2.0 * blocks.s) * self.model.grid.mass;
        for (i, outer) in self.outers.iter().enumerate() {
            let level = self.level_of(i);
            let x: CMatrix = if level == 0 {
                let mut x = if regular { blocks.lll_regular.clone() } else { CMatrix::zeros(m, m) };
                if pole {
                    x[(0, 0)] += pole_coef;
                }
                x
            } else if regular && !self.leading && level <= blocks.excited.len() {
                blocks.excited[level - 1].clone()
            } else {
                continue;
            };
            for a in 0..r {
                for b in 0..r {
                    let o = outer[(a, b)];
                    if o.norm() == 0.0 {
                        continue;
                    }
                    for p in 0..m {
                        for q in 0..m {
                            y[(a * m + p, b * m + q)] += o * x[(p, q)];
                        }
                    }
                }
            }
        }
        // (J ⊗ 1) y
        let mut out = CMatrix::zeros(r * m, r * m);
        for a in 0..r {
            for c in 0..r {
                let j = f.sign[(a, c)];
                if j.norm() == 0.0 {
                    continue;
                }
                for p in 0..m {
                    for col in 0..r * m {
                        out[(a * m + p, col)] += j * y[(c * m + p, col)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// T(k) with F(k) = I + ε T(k).
    pub fn coupling_part(&self, k: Complex64) -> Result<CMatrix> {
        let unit = SectorFamily3D { eps: 1.0, outers: self.outers.clone(), ..*self };
        let f = unit.eval(k)?;
        let n = f.nrows();
        Ok(f - CMatrix::identity(n, n))
    }

    /// 𝒜(k) = η (J ⊗ 1)[Σ_i outer_i ⊗ 𝒳_i(k) - pole], without ε.
    pub fn regular_part(&self, k: Complex64) -> Result<CMatrix> {
        match &self.sector.factor {
            Some(_) => Ok(self.assemble(k, false, true)? * self.eta),
            None => Ok(CMatrix::zeros(1, 1)),
        }
    }
}

impl OperatorFamily for SectorFamily3D<'_> {
    fn dim(&self) -> usize {
        self.sector.factor.as_ref().map_or(1, |f| f.rank() * self.model.grid.frame_dim())
    }

    fn eval(&self, k: Complex64) -> Result<CMatrix> {
        if k.norm() == 0.0 {
            return Err(Error::InvalidInput("k = 0 is outside the domain".into()));
        }
        if !self.in_domain(k) {
            return Err(Error::InvalidInput(format!("k = {k} is outside the closed quarter plane of the branch")));
        }
        let c = self.eta * self.eps;
        match &self.sector.factor {
            Some(_) => {
                let n = self.dim();
                let t = self.assemble(k, true, !self.leading)?;
                Ok(CMatrix::identity(n, n) + t * c)
            }
            None => {
                let s = k * self.branch.sign();
                let pole = I / (2.0 * s) * self.model.grid.mass * self.sector.lowest;
                Ok(CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0) + c * pole))
            }
        }
    }

    fn in_domain(&self, k: Complex64) -> bool {
        let n = k.norm();
        let tol = 1e-9 * n;
        n > 0.0 && k.re >= -tol && self.branch.sign() * k.im >= -tol && k.norm_sqr() < 2.0 * self.model.field.b0
    }

    fn fd_step(&self, k: Complex64) -> f64 {
        1e-3 * k.norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detindex::{index_along_contour, min_singular_value, Contour};
    use crate::field::make_constant_field;
    use crate::potential::PotentialShape;
    use crate::profile::Profile;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn gaussian_model(eps: f64, eta: Complex64, opts: Model3DOptions) -> Pauli3DModel {
        let field = make_constant_field(1.0).unwrap();
        let shape = PotentialShape::diagonal(Profile::gaussian(1.0, 1.0), Profile::Zero);
        let pot = MatrixPotential::new(eta, eps, shape, Some(Profile::gaussian(1.0, 1.0))).unwrap();
        Pauli3DModel::new(field, pot, opts).unwrap()
    }

    fn small_opts() -> Model3DOptions {
        Model3DOptions { k_count: 4, levels: 3, n_par: 129, m_x: 8, ..Model3DOptions::default() }
    }

    #[test]
    fn kernel_values() {
        assert!((resolvent_kernel_1d(c(-1.0, 0.0), 0.3, 0.3).unwrap() - c(0.5, 0.0)).norm() < 1e-15);
        assert!((resolvent_kernel_1d(c(1.0, 0.0), 2.0, 2.0).unwrap() - c(0.0, 0.5)).norm() < 1e-15);
        assert!(resolvent_kernel_1d(c(0.0, 0.0), 0.0, 1.0).is_err());
        assert!(resolvent_kernel_1d(c(-1.0, 0.1), 0.0, 60.0).unwrap().norm() < 1e-20);
    }

    #[test]
    fn s_kernel_limits() {
        for &s in &[c(0.3, 0.2), c(1e-4, 0.0), c(0.0, 1e-4)] {
            assert_eq!(s_kernel(s, 0.0), c(0.0, 0.0));
        }
        // first order -|Δ|/2, remainder |k| |Δ|²/4
        let k = Complex64::from_polar(1e-4, 0.7);
        for &d in &[0.01, 0.05, 0.1] {
            assert!((s_kernel(k, d) + d / 2.0).norm() < 1e-6);
        }
        for &d in &[0.5, 2.0, 7.0] {
            let v = s_kernel(k, d);
            assert!((v + d / 2.0).norm() <= 0.26 * 1e-4 * d * d, "d = {d}: {v}");
        }
    }

    #[test]
    fn branch_consistency() {
        let g = KPlaneGeometry::new(0.5, 2.0).unwrap();
        for i in 1..20 {
            for j in 1..10 {
                let k = Complex64::from_polar(0.5 * i as f64 / 20.0, 0.5 * PI * j as f64 / 10.0);
                assert!(g.in_d_star(k, Branch::Plus));
                let z = KPlaneGeometry::z_of(k);
                assert!(KPlaneGeometry::in_half_ring(z, Branch::Plus, 0.0, 0.25));
                assert!((sqrt_upper(z) - k).norm() < 1e-14);
                let km = k.conj();
                assert!(g.in_d_star(km, Branch::Minus));
                assert!((KPlaneGeometry::k_of(km * km, Branch::Minus) - km).norm() < 1e-14);
            }
        }
        assert!(KPlaneGeometry::in_c_delta(c(1.0, -1.0), 1.0));
        assert!(!KPlaneGeometry::in_c_delta(c(0.5, -1.0), 1.0));
        assert!(KPlaneGeometry::new(2.0, 2.0).is_err());
    }

    #[test]
    fn e_sector_excludes_the_ray() {
        let g = KPlaneGeometry::new(0.5, 2.0).unwrap();
        let alpha = 2.0 * PI / 3.0;
        let ray = 2.0 * alpha - PI;
        assert!(!g.in_e_sector(Complex64::from_polar(0.1, ray), Branch::Plus, alpha, 0.1));
        assert!(!g.in_e_sector(Complex64::from_polar(0.1, ray + 0.15), Branch::Plus, alpha, 0.1));
        assert!(g.in_e_sector(Complex64::from_polar(0.1, ray + 0.25), Branch::Plus, alpha, 0.1));
    }

    #[test]
    fn frame_starts_with_weight_and_blocks_are_symmetric() {
        let m = gaussian_model(0.01, c(-0.5, 0.5), small_opts());
        let f = &m.grid.frame;
        let gram = f.transpose() * f;
        assert!((gram - DMatrix::identity(f.ncols(), f.ncols())).abs().max() < 1e-12);
        let norm = m.grid.mass.sqrt();
        for i in 0..m.grid.len() {
            assert!((f[(i, 0)] - m.grid.cw[i] / norm).abs() < 1e-13);
        }
        assert!((m.grid.mass - PI.sqrt()).abs() < 1e-12);
        let b = m.blocks(c(0.01, 0.02), Branch::Plus).unwrap();
        assert!((&b.lll_regular - b.lll_regular.transpose()).norm() < 1e-13);
        for x in &b.excited {
            assert!((x - x.transpose()).norm() < 1e-13);
        }
        // constant kernel compresses onto e₀e₀ᵀ
        let one = m.grid.compress(|_| c(1.0, 0.0));
        assert!((one[(0, 0)] - m.grid.mass).norm() < 1e-12);
        assert!(one.iter().skip(1).all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn k_k_star_identity_and_top_eigenvalue() {
        let m = gaussian_model(1.0, c(1.0, 0.0), small_opts());
        let kb = assemble_k_and_b(&m).unwrap();
        assert!(kb.identity_error < 1e-9);
        assert!((kb.b_eigenvalues[0] - PI.sqrt() / 2.0 / 3.0).abs() < 1e-6);
        let zero = gaussian_model(0.0, c(1.0, 0.0), small_opts());
        let kb0 = assemble_k_and_b(&zero).unwrap();
        assert!(kb0.k_rows.iter().all(|r| r.norm() == 0.0));
    }

    #[test]
    fn leading_family_vanishes_at_prediction() {
        let eta = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
        let m = gaussian_model(0.01, eta, small_opts());
        let fam = m.leading_family(1, eta, Branch::Plus).unwrap();
        let k = m.leading_prediction(1, eta, Branch::Plus);
        assert!(m.geometry.in_d_star(k, Branch::Plus));
        assert!(min_singular_value(&fam.eval(k).unwrap()) < 1e-12);
        let contour = Contour::circle(k, 0.2 * k.norm());
        assert_eq!(index_along_contour(&fam, &contour).unwrap(), 1);
        let full = m.family(1, eta, Branch::Plus).unwrap();
        assert_eq!(index_along_contour(&full, &contour).unwrap(), 1);
    }

    #[test]
    fn conjugate_branch_symmetry() {
        let eta = Complex64::from_polar(1.0, 2.0);
        let m = gaussian_model(0.05, eta, small_opts());
        let mc = gaussian_model(0.05, eta.conj(), small_opts());
        for &k in &[c(0.01, 0.02), c(0.2, 0.05), c(0.003, 0.0)] {
            let plus = m.family(0, eta, Branch::Plus).unwrap().log_det(k).unwrap().value();
            let minus = mc.family(0, eta.conj(), Branch::Minus).unwrap().log_det(k.conj()).unwrap().value();
            assert!((plus.conj() - minus).norm() < 1e-10, "{plus} vs {minus}");
        }
    }

    #[test]
    fn eval_rejects_outside_points() {
        let m = gaussian_model(0.01, c(-1.0, 0.0), small_opts());
        let fam = m.family(0, c(-1.0, 0.0), Branch::Plus).unwrap();
        assert!(fam.eval(c(0.0, 0.0)).is_err());
        assert!(fam.eval(c(0.1, -0.1)).is_err());
        assert!(fam.eval(c(0.1, 0.0)).is_ok());
    }

    #[test]
    fn heavy_tail_is_rejected() {
        let field = make_constant_field(1.0).unwrap();
        let shape = PotentialShape::diagonal(Profile::gaussian(1.0, 1.0), Profile::Zero);
        let pot = MatrixPotential::new(c(1.0, 0.0), 0.1, shape, Some(Profile::bracket(1.0, 4.0))).unwrap();
        assert!(Pauli3DModel::new(field, pot, small_opts()).is_err());
    }
}

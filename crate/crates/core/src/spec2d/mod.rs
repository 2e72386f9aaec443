//! Two-dimensional engine: Birman-Schwinger families per angular sector,
//! eigenvalues near zero, localization, the invertibility condition at zero
//! and counting against Toeplitz spectra.

mod grid;

pub use grid::{flux_count, GridBlock, GridPauli2D, GridSpectrum};

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{build_zero_modes, ZeroModeBasis};
use crate::detindex::{self, characteristic_values, min_singular_value, OperatorFamily, SearchOptions, SearchRegion};
use crate::field::AdmissibleField;
use crate::landau::{SectorBasis, WeightedFactor};
use crate::potential::MatrixPotential;
use crate::toeplitz::{self, Symbol, ToeplitzOperator};
use crate::{CMatrix, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Model2DOptions {
    /// Number of angular sectors (zero modes) retained.
    pub k_count: usize,
    /// Landau levels per spin component in each sector.
    pub levels: usize,
    /// Gauss-Legendre order per panel for the sector Galerkin matrices.
    pub quad_order: usize,
    /// Gauss-Legendre order of the zero-mode basis rules.
    pub basis_order: usize,
    /// Relative cut on the spectrum of the Galerkin |W| (rank truncation).
    pub rel_cut: f64,
    /// Drop the resolvent part on the excited levels.
    pub leading_order: bool,
}

impl Default for Model2DOptions {
    fn default() -> Self {
        Self { k_count: 40, levels: 12, quad_order: 32, basis_order: 256, rel_cut: 1e-13, leading_order: false }
    }
}

/// Data of one angular sector.
#[derive(Debug, Clone)]
pub struct Sector2D {
    pub ell: usize,
    /// Unperturbed energies of the sector basis (constant field only).
    pub energies: Vec<f64>,
    pub factor: Option<WeightedFactor>,
    /// Galerkin matrix of W (without ε η).
    pub galerkin: Option<CMatrix>,
    /// ⟨ψ_ℓ, W₁₁ ψ_ℓ⟩.
    pub lowest: f64,
    /// ⟨ψ_ℓ, |W|₁₁ ψ_ℓ⟩.
    pub lowest_abs: f64,
}

#[derive(Debug, Clone)]
pub struct Pauli2DModel {
    pub field: AdmissibleField,
    pub basis: ZeroModeBasis,
    pub pot: MatrixPotential,
    pub opts: Model2DOptions,
    pub sectors: Vec<Sector2D>,
    /// The excited-level resolvent is included.
    pub full: bool,
}

impl Pauli2DModel {
    pub fn new(field: AdmissibleField, pot: MatrixPotential, opts: Model2DOptions) -> Result<Self> {
        if pot.dim() != 2 {
            return Err(Error::InvalidInput("spec2d needs a two-dimensional potential".into()));
        }
        pot.validate()?;
        let basis = build_zero_modes(&field, opts.k_count, opts.basis_order)?;
        let full = field.is_constant() && !opts.leading_order;
        let breaks = pot.shape.breakpoints();
        let w11 = |r: f64| pot.shape.at(r)[(0, 0)].re;
        let abs11 = |r: f64| crate::potential::abs_hermitian(&pot.shape.at(r))[(0, 0)].re;
        let sectors = (0..opts.k_count)
            .into_par_iter()
            .map(|ell| -> Result<Sector2D> {
                if field.is_constant() {
                    let levels = if full { opts.levels } else { 1 };
                    let sb = SectorBasis::new(field.b0, ell, levels, &breaks, opts.quad_order)?;
                    let w = sb.galerkin_shape(&pot.shape);
                    let wa = sb.galerkin_abs_shape(&pot.shape);
                    let factor = WeightedFactor::new(&w, &wa, opts.rel_cut)?;
                    let lowest = w[(0, 0)].re;
                    let lowest_abs = wa[(0, 0)].re;
                    Ok(Sector2D { ell, energies: sb.energies(), factor: Some(factor), galerkin: Some(w), lowest, lowest_abs })
                } else {
                    let rule = basis.mode_rule(ell, &breaks);
                    Ok(Sector2D {
                        ell,
                        energies: Vec::new(),
                        factor: None,
                        galerkin: None,
                        lowest: rule.expectation(w11),
                        lowest_abs: rule.expectation(abs11),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { field, basis, pot, opts, sectors, full })
    }

    pub fn zeta(&self) -> f64 {
        self.field.zeta
    }

    pub fn eps(&self) -> f64 {
        self.pot.coupling
    }

    /// Family of one sector in μ.
    pub fn family(&self, ell: usize, eta: Complex64) -> Result<SectorFamily2D<'_>> {
        let sector = self.sectors.get(ell).ok_or_else(|| Error::InvalidInput(format!("sector {ell} not retained")))?;
        Ok(SectorFamily2D { model: self, sector, eta, leading: !self.full })
    }

    /// Leading-order family of one sector (resolvent on excited levels dropped).
    pub fn leading_family(&self, ell: usize, eta: Complex64) -> Result<SectorFamily2D<'_>> {
        let mut f = self.family(ell, eta)?;
        f.leading = true;
        Ok(f)
    }

    /// Eigenvalues of Λ + ε η W on the sector Galerkin space inside |μ| < ζ.
    pub fn galerkin_eigenvalues(&self, ell: usize, eta: Complex64) -> Result<Vec<Complex64>> {
        let s = &self.sectors[ell];
        let Some(w) = &s.galerkin else {
            return Err(Error::InvalidInput("Galerkin eigenvalues need a constant field".into()));
        };
        let n = w.nrows();
        let mut m = w * (eta * self.eps());
        for i in 0..n {
            m[(i, i)] += s.energies[i];
        }
        let ev = detindex::eigenvalues(&m)?;
        Ok(ev.into_iter().filter(|z| z.norm() < self.zeta()).collect())
    }

    /// Leading-order predictions ε η ⟨ψ_ℓ, W₁₁ ψ_ℓ⟩, one per sector.
    pub fn leading_predictions(&self, eta: Complex64) -> Vec<Complex64> {
        self.sectors.iter().map(|s| eta * (self.eps() * s.lowest)).collect()
    }

    /// Toeplitz operator of |V|₁₁ = ε |η| |W|₁₁ on the model's zero modes.
    pub fn toeplitz_abs_v11(&self) -> Result<ToeplitzOperator> {
        let profile = self.pot.abs_v11_profile()?;
        toeplitz::assemble(&self.basis, &Symbol::Radial(profile))
    }
}

/// μ ↦ I - (ε η / μ) 𝒜(μ) on one sector.
pub struct SectorFamily2D<'a> {
    model: &'a Pauli2DModel,
    sector: &'a Sector2D,
    eta: Complex64,
    leading: bool,
}

impl SectorFamily2D<'_> {
    /// Σ U* D(μ) U Σ with D = 1 on the zero mode and -μ/(λ-μ) on excited levels.
    pub fn weighted_resolvent(&self, mu: Complex64) -> CMatrix {
        let f = self.sector.factor.as_ref().expect("constant-field sector");
        let x = &f.u_sigma;
        let n = x.nrows();
        let r = x.ncols();
        let mut d = CMatrix::zeros(r, r);
        for i in 0..n {
            let lam = self.sector.energies[i];
            let di = if lam == 0.0 {
                Complex64::new(1.0, 0.0)
            } else if self.leading {
                continue;
            } else {
                -mu / (lam - mu)
            };
            for a in 0..r {
                let xa = x[(i, a)].conj() * di;
                for b in 0..r {
                    d[(a, b)] += xa * x[(i, b)];
                }
            }
        }
        d
    }

    /// 𝒜(μ) = J_R Σ U* D(μ) U Σ.
    pub fn regular_part(&self, mu: Complex64) -> CMatrix {
        let f = self.sector.factor.as_ref().expect("constant-field sector");
        &f.sign * self.weighted_resolvent(mu)
    }
}

impl OperatorFamily for SectorFamily2D<'_> {
    fn dim(&self) -> usize {
        self.sector.factor.as_ref().map_or(1, |f| f.rank())
    }

    fn eval(&self, mu: Complex64) -> Result<CMatrix> {
        if mu.norm() == 0.0 {
            return Err(Error::InvalidInput("μ = 0 is outside the domain".into()));
        }
        if mu.norm() >= self.model.zeta() {
            return Err(Error::InvalidInput(format!("|μ| = {:.3e} is not below ζ = {:.3e}", mu.norm(), self.model.zeta())));
        }
        let c = self.eta * self.model.eps() / mu;
        match &self.sector.factor {
            Some(f) => Ok(CMatrix::identity(f.rank(), f.rank()) - self.regular_part(mu) * c),
            None => Ok(CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0) - c * self.sector.lowest)),
        }
    }

    fn in_domain(&self, mu: Complex64) -> bool {
        mu.norm() > 0.0 && mu.norm() < self.model.zeta()
    }

    fn fd_step(&self, mu: Complex64) -> f64 {
        1e-3 * mu.norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eigenvalue2D {
    pub mu: Complex64,
    pub multiplicity: i64,
    pub sector: usize,
    pub cluster: bool,
}

impl Eigenvalue2D {
    pub fn abs(&self) -> f64 {
        self.mu.norm()
    }

    pub fn arg_over(&self, eta: Complex64) -> f64 {
        (self.mu / eta).arg()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport2D {
    pub eta: Complex64,
    pub eps: f64,
    pub r: f64,
    pub r0: f64,
    pub eigenvalues: Vec<Eigenvalue2D>,
    /// Every sector's multiplicities add up to its boundary winding.
    pub consistent: bool,
    /// ‖V‖_∞.
    pub sup_norm_v: f64,
}

impl SpectralReport2D {
    pub fn count_in(&self, lo: f64, hi: f64) -> i64 {
        self.eigenvalues.iter().filter(|e| e.abs() > lo && e.abs() < hi).map(|e| e.multiplicity).sum()
    }

    /// Eigenvalues violating |Im μ| ≤ ‖V‖_∞ + tol.
    pub fn strip_violations(&self, tol: f64) -> Vec<Complex64> {
        self.eigenvalues.iter().map(|e| e.mu).filter(|m| m.im.abs() > self.sup_norm_v + tol).collect()
    }
}

/// Search options tuned for the sector families: a coarse grid, with the
/// leading-order prediction as an extra Newton seed.
pub fn sector_search_options() -> SearchOptions {
    SearchOptions { n_radial: 12, n_angular: 24, contour_samples: 48, ..SearchOptions::default() }
}

/// Characteristic values with r < |μ| < r0 over all retained sectors.
pub fn eigenvalues_near_zero_2d(model: &Pauli2DModel, eta: Complex64, r: f64, r0: f64) -> Result<SpectralReport2D> {
    eigenvalues_near_zero_2d_with(model, eta, r, r0, &sector_search_options())
}

pub fn eigenvalues_near_zero_2d_with(
    model: &Pauli2DModel,
    eta: Complex64,
    r: f64,
    r0: f64,
    opts: &SearchOptions,
) -> Result<SpectralReport2D> {
    if eta.norm() == 0.0 {
        return Err(Error::InvalidInput("eta must be nonzero".into()));
    }
    if !(0.0 < r && r < r0 && r0 < model.zeta()) {
        return Err(Error::InvalidInput(format!("need 0 < r < r0 < ζ = {:.4}", model.zeta())));
    }
    let region = SearchRegion::annulus(r, r0);
    let per_sector: Vec<(Vec<Eigenvalue2D>, bool)> = (0..model.sectors.len())
        .into_par_iter()
        .map(|ell| -> Result<(Vec<Eigenvalue2D>, bool)> {
            let fam = model.family(ell, eta)?;
            let mut o = opts.clone();
            o.seeds.push(eta * (model.eps() * model.sectors[ell].lowest));
            let rep = characteristic_values(&fam, &region, &o)?;
            let vals = rep
                .values
                .iter()
                .map(|v| Eigenvalue2D { mu: v.z, multiplicity: v.multiplicity, sector: ell, cluster: v.cluster })
                .collect();
            Ok((vals, rep.consistent))
        })
        .collect::<Result<Vec<_>>>()?;
    let consistent = per_sector.iter().all(|p| p.1);
    let mut eigenvalues: Vec<Eigenvalue2D> = per_sector.into_iter().flat_map(|p| p.0).collect();
    eigenvalues.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    Ok(SpectralReport2D { eta, eps: model.eps(), r, r0, eigenvalues, consistent, sup_norm_v: model.pot.sup_norm() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationResult {
    pub pass: bool,
    pub checked: usize,
    pub offenders: Vec<Complex64>,
}

/// w lies in the closure of {x + iy : -δx < y < δx}.
pub fn in_sector(w: Complex64, delta: f64, tol: f64) -> bool {
    w.re >= -tol && w.im.abs() <= delta * w.re + tol
}

/// Every eigenvalue with r < |μ| < r0 satisfies μ/(±η) ∈ Γ^δ; `sign` selects
/// +η (1), -η (-1) or either (0).
pub fn verify_localization_2d(
    report: &SpectralReport2D,
    eta: Complex64,
    sign: i32,
    delta: f64,
    r: f64,
    r0: f64,
) -> LocalizationResult {
    let mut offenders = Vec::new();
    let mut checked = 0;
    for e in report.eigenvalues.iter().filter(|e| e.abs() > r && e.abs() < r0) {
        checked += 1;
        let tol = 1e-12 * e.abs();
        let plus = in_sector(e.mu / eta, delta, tol);
        let minus = in_sector(-e.mu / eta, delta, tol);
        let ok = match sign {
            1 => plus,
            -1 => minus,
            _ => plus || minus,
        };
        if !ok {
            offenders.push(e.mu);
        }
    }
    LocalizationResult { pass: offenders.is_empty(), checked, offenders }
}

/// Smallest singular value of I - η A1 Π, Π the projector onto the numerical
/// kernel of A0 (singular values below 1e-10).
pub fn condition_margin(a0: &CMatrix, a1: &CMatrix, eta: Complex64) -> f64 {
    let n = a0.nrows();
    let svd = a0.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors");
    let mut pi = CMatrix::zeros(n, n);
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s < 1e-10 * top.max(1.0) {
            let v = v_t.row(i).adjoint();
            pi += &v * v.adjoint();
        }
    }
    min_singular_value(&(CMatrix::identity(n, n) - a1 * pi * eta))
}

/// Invertibility margin of I - η ε 𝒜'(0) Π, minimized over sectors.
pub fn check_condition_2_10(model: &Pauli2DModel, eta: Complex64) -> Result<f64> {
    if !model.full {
        return Ok(1.0);
    }
    let margins = (0..model.sectors.len())
        .into_par_iter()
        .map(|ell| -> Result<f64> {
            let fam = model.family(ell, eta)?;
            let a0 = fam.regular_part(Complex64::new(0.0, 0.0));
            let h = 1e-4 * model.zeta();
            let d = |s: f64| fam.regular_part(Complex64::new(s * h, 0.0));
            let a1 = ((d(1.0) - d(-1.0)) * Complex64::new(8.0, 0.0) - (d(2.0) - d(-2.0))) / Complex64::new(12.0 * h, 0.0);
            let e = Complex64::new(model.eps(), 0.0);
            Ok(condition_margin(&(a0 * e), &(a1 * e), eta))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(margins.into_iter().fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountingRow {
    pub r: f64,
    pub eigen_count: i64,
    pub toeplitz_count: usize,
    pub ratio: f64,
    /// #eig(r, 2r) / (Tr 1_(r,∞) |ln r| + 1).
    pub upper_ratio: f64,
}

/// Eigenvalue counts in (r, r0) against Tr 1_(r,∞)(p|V|₁₁p).
pub fn counting_vs_toeplitz_2d(
    report: &SpectralReport2D,
    toeplitz: &ToeplitzOperator,
    thresholds: &[f64],
) -> Result<Vec<CountingRow>> {
    thresholds
        .iter()
        .map(|&r| {
            if r < report.r || r >= report.r0 {
                return Err(Error::InvalidInput(format!("threshold {r:.3e} outside the searched annulus")));
            }
            let n = report.count_in(r, report.r0);
            let t = toeplitz.counting(r)?;
            let band = report.count_in(r, 2.0 * r);
            Ok(CountingRow {
                r,
                eigen_count: n,
                toeplitz_count: t,
                ratio: if t == 0 { f64::NAN } else { n as f64 / t as f64 },
                upper_ratio: band as f64 / (t as f64 * r.ln().abs() + 1.0),
            })
        })
        .collect()
}

/// Least-squares slope of ln(upper_ratio) against ln r.
pub fn upper_ratio_trend(rows: &[CountingRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.upper_ratio > 0.0).map(|r| (r.r.ln(), r.upper_ratio.ln())).collect();
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    toeplitz::linear_fit(&x, &y).0
}

/// Angle of μ/η, in (-π, π].
pub fn arg_over(mu: Complex64, eta: Complex64) -> f64 {
    let a = (mu / eta).arg();
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_constant_field;
    use crate::potential::PotentialShape;
    use crate::profile::Profile;

    fn gaussian_model(eps: f64, k: usize, levels: usize) -> Pauli2DModel {
        let pot = MatrixPotential::new(
            Complex64::new(1.0, 0.0),
            eps,
            PotentialShape::diagonal(Profile::gaussian(1.0, 1.0), Profile::Zero),
            None,
        )
        .unwrap();
        let opts = Model2DOptions { k_count: k, levels, ..Model2DOptions::default() };
        Pauli2DModel::new(make_constant_field(1.0).unwrap(), pot, opts).unwrap()
    }

    #[test]
    fn zero_potential_gives_identity_and_no_eigenvalues() {
        let pot =
            MatrixPotential::new(Complex64::new(1.0, 0.0), 0.1, PotentialShape::diagonal(Profile::Zero, Profile::Zero), None)
                .unwrap();
        let model = Pauli2DModel::new(
            make_constant_field(1.0).unwrap(),
            pot,
            Model2DOptions { k_count: 5, levels: 3, ..Default::default() },
        )
        .unwrap();
        let f = model.family(0, Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(f.dim(), 0);
        let rep = eigenvalues_near_zero_2d(&model, Complex64::new(1.0, 0.0), 1e-6, 0.1).unwrap();
        assert!(rep.eigenvalues.is_empty());
    }

    #[test]
    fn singular_part_matches_toeplitz() {
        let model = gaussian_model(0.05, 10, 4);
        let t = toeplitz::assemble(&model.basis, &Symbol::Radial(Profile::gaussian(1.0, 1.0))).unwrap();
        for ell in 0..10 {
            let fam = model.leading_family(ell, Complex64::new(1.0, 0.0)).unwrap();
            let a0 = fam.regular_part(Complex64::new(0.0, 0.0));
            let ev = detindex::eigenvalues(&a0).unwrap();
            let top = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            assert!((top / t.eigs[ell] - 1.0).abs() < 1e-10, "ell {ell}");
        }
    }

    #[test]
    fn regular_part_is_hermitian_on_negative_axis() {
        let model = gaussian_model(0.05, 4, 6);
        let fam = model.family(2, Complex64::new(1.0, 0.0)).unwrap();
        let a = fam.regular_part(Complex64::new(-0.3, 0.0));
        assert!((&a - a.adjoint()).norm() <= 1e-10 * a.norm());
    }

    #[test]
    fn zeros_match_galerkin_eigenvalues() {
        let model = gaussian_model(0.05, 6, 6);
        let eta = Complex64::from_polar(1.0, 0.6);
        let rep = eigenvalues_near_zero_2d(&model, eta, 1e-6, 0.2).unwrap();
        assert!(rep.consistent);
        for ell in 0..6 {
            let ev = model.galerkin_eigenvalues(ell, eta).unwrap();
            let inside: Vec<_> = ev.iter().filter(|z| z.norm() > 1e-6 && z.norm() < 0.2).collect();
            let found: Vec<_> = rep.eigenvalues.iter().filter(|e| e.sector == ell).collect();
            assert_eq!(inside.len(), found.len(), "sector {ell}");
            for z in inside {
                assert!(found.iter().any(|e| (e.mu - z).norm() < 1e-9 * z.norm()));
            }
        }
    }

    #[test]
    fn first_order_oracle_for_real_eta() {
        let model = gaussian_model(0.01, 8, 6);
        let rep = eigenvalues_near_zero_2d(&model, Complex64::new(1.0, 0.0), 1e-8, 0.2).unwrap();
        for k in 0..5 {
            let e = rep.eigenvalues.iter().find(|e| e.sector == k).unwrap();
            let pred = 0.01 * 3f64.powi(-(k as i32 + 1));
            assert!(e.mu.im.abs() < 1e-12 * e.abs() && e.mu.re > 0.0);
            assert!((e.mu.re / pred - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn conjugate_eta_conjugates_eigenvalues() {
        let model = gaussian_model(0.05, 5, 4);
        let eta = Complex64::from_polar(1.0, 1.1);
        let a = eigenvalues_near_zero_2d(&model, eta, 1e-6, 0.2).unwrap();
        let b = eigenvalues_near_zero_2d(&model, eta.conj(), 1e-6, 0.2).unwrap();
        assert_eq!(a.eigenvalues.len(), b.eigenvalues.len());
        for e in &a.eigenvalues {
            assert!(b.eigenvalues.iter().any(|f| (f.mu - e.mu.conj()).norm() < 1e-10 * e.abs()));
        }
    }

    #[test]
    fn condition_margin_examples() {
        let model = gaussian_model(0.01, 6, 4);
        let m = check_condition_2_10(&model, Complex64::new(1.0, 0.0)).unwrap();
        assert!(m > 0.95 && m <= 1.0 + 1e-12, "margin {m}");
        let inv = CMatrix::identity(2, 2);
        assert!((condition_margin(&inv, &inv, Complex64::new(1.0, 0.0)) - 1.0).abs() < 1e-14);
        let zero = CMatrix::zeros(1, 1);
        let a1 = CMatrix::from_element(1, 1, Complex64::new(0.25, 0.5));
        let eta = Complex64::new(1.0, 0.0) / a1[(0, 0)];
        assert!(condition_margin(&zero, &a1, eta) < 1e-14);
    }

    #[test]
    fn sector_predicate() {
        assert!(in_sector(Complex64::new(1.0, 0.19), 0.2, 0.0));
        assert!(!in_sector(Complex64::new(1.0, 0.21), 0.2, 0.0));
        assert!(!in_sector(Complex64::new(-1.0, 0.0), 0.2, 0.0));
    }
}

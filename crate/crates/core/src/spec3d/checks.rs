//! Checks built on the 3D family: sector-free region, accumulation along the
//! ray, the ε₀ threshold and half-ring counts.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{angular_distance, Branch, KPlaneGeometry, Pauli3DModel};
use crate::detindex::{
    characteristic_values, index_along_contour, singular_values, zeros_inside, Contour, OperatorFamily, SearchOptions,
    SearchRegion,
};
use crate::toeplitz::linear_fit;
use crate::{CMatrix, Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Smallest radius probed, as a fraction of κ.
pub const INNER_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharValue3D {
    pub k: Complex64,
    pub z: Complex64,
    pub multiplicity: i64,
    pub sector: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport3D {
    pub branch: Branch,
    pub r_in: f64,
    pub r_out: f64,
    pub values: Vec<CharValue3D>,
    pub boundary_total: i64,
    pub consistent: bool,
}

/// Search options for the sector families in k.
pub fn search_options_3d() -> SearchOptions {
    SearchOptions { n_radial: 8, n_angular: 8, contour_samples: 32, check_analyticity: false, ..SearchOptions::default() }
}

/// Characteristic values with r_in < |k| < r_out in the branch's closed
/// quarter plane, over all retained sectors.
pub fn scan_quarter_3d(model: &Pauli3DModel, eta: Complex64, branch: Branch, r_in: f64, r_out: f64) -> Result<ScanReport3D> {
    let (lo, hi) = branch.arg_range();
    let region = SearchRegion::sector(r_in, r_out, lo, hi);
    let per: Vec<(Vec<CharValue3D>, i64, bool)> = (0..model.sectors.len())
        .into_par_iter()
        .map(|ell| -> Result<_> {
            let fam = model.family(ell, eta, branch)?;
            let mut o = search_options_3d();
            let seed = model.leading_prediction(ell, eta, branch);
            if fam.in_domain(seed) {
                o.seeds.push(seed);
            }
            let rep = characteristic_values(&fam, &region, &o)?;
            let vals = rep
                .values
                .iter()
                .map(|v| CharValue3D { k: v.z, z: v.z * v.z, multiplicity: v.multiplicity, sector: ell })
                .collect();
            Ok((vals, rep.boundary_index, rep.consistent))
        })
        .collect::<Result<Vec<_>>>()?;
    let boundary_total = per.iter().map(|p| p.1).sum();
    let consistent = per.iter().all(|p| p.2);
    let mut values: Vec<CharValue3D> = per.into_iter().flat_map(|p| p.0).collect();
    values.sort_by(|a, b| b.k.norm().total_cmp(&a.k.norm()));
    Ok(ScanReport3D { branch, r_in, r_out, values, boundary_total, consistent })
}

/// Direction of the leading characteristic values in the k plane.
pub fn leading_direction(eta: Complex64, branch: Branch) -> f64 {
    (-I * eta * branch.sign()).arg()
}

/// About n points k = η w with w ∈ C_δ and k in the closed quarter disk of the
/// branch, log-spaced in |k| ∈ [10⁻⁴κ, κ). When the open intersection is
/// empty only its boundary rays are sampled.
pub fn sample_sector_3d(eta: Complex64, delta: f64, kappa: f64, n: usize, branch: Branch) -> Vec<Complex64> {
    let (lo, hi) = branch.arg_range();
    let unit = eta / eta.norm();
    let allowed: Vec<f64> = (0..=2048)
        .map(|i| lo + (hi - lo) * i as f64 / 2048.0)
        .filter(|&a| {
            let w = Complex64::from_polar(1.0, a) / unit;
            -delta * w.im <= w.re.abs() + 1e-12
        })
        .collect();
    if allowed.is_empty() || n == 0 {
        return Vec::new();
    }
    let n_ang = allowed.len().min(40);
    let args: Vec<f64> =
        (0..n_ang).map(|i| allowed[if n_ang == 1 { 0 } else { i * (allowed.len() - 1) / (n_ang - 1) }]).collect();
    let n_rad = n.div_ceil(n_ang);
    let (r_lo, r_hi) = (INNER_FRACTION * kappa, kappa * (1.0 - 1e-9));
    let mut out = Vec::with_capacity(n_rad * n_ang);
    for i in 0..n_rad {
        let t = if n_rad == 1 { 0.5 } else { i as f64 / (n_rad - 1) as f64 };
        let r = r_lo * (r_hi / r_lo).powf(t);
        for &a in &args {
            out.push(Complex64::from_polar(r, a));
        }
    }
    out.truncate(n);
    out
}

/// σ_min(I + ε T), or the lower bound 1 - ε‖T‖ when that exceeds max(floor, 0.9).
fn sigma_min_at(t: &CMatrix, eps: f64, t_norm: f64, floor: f64) -> f64 {
    let cheap = 1.0 - eps * t_norm;
    if cheap > floor.max(0.9) {
        return cheap;
    }
    let n = t.nrows();
    let m = CMatrix::identity(n, n) + t * Complex64::new(eps, 0.0);
    singular_values(&m).into_iter().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorFreeRow {
    pub eps: f64,
    pub min_sigma: f64,
    pub worst_k: Complex64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorFreeReport {
    pub eta: Complex64,
    pub delta: f64,
    pub kappa: f64,
    pub samples: usize,
    /// Only the boundary rays of the quarter plane meet η C_δ.
    pub boundary_only: bool,
    /// max ‖(I + iεη/k ℬ)⁻¹‖ / √(1 + δ⁻²) over samples and ε.
    pub bound_ratio: f64,
    pub bound_pass: bool,
    pub rows: Vec<SectorFreeRow>,
    /// Winding over the k image of the sector outside the excluded cone,
    /// summed over sectors; None when that region is empty.
    pub winding: Option<i64>,
}

/// Samples η C_δ inside the quarter disk: checks the closed-form bound for the
/// leading term, σ_min of the full family against `floor` for each ε, and the
/// winding over the complement of the excluded cone.
pub fn verify_sector_free_3d(
    model: &Pauli3DModel,
    eta: Complex64,
    delta: f64,
    eps_list: &[f64],
    n_samples: usize,
    floor: f64,
) -> Result<SectorFreeReport> {
    let branch = if eta.arg() >= 0.0 { Branch::Plus } else { Branch::Minus };
    let kappa = model.kappa();
    let ks = sample_sector_3d(eta, delta, kappa, n_samples, branch);
    let (lo, hi) = branch.arg_range();
    let boundary_only = ks.iter().all(|k| (k.arg() - lo).abs() < 1e-12 || (k.arg() - hi).abs() < 1e-12);
    let bound = (1.0 + delta.powi(-2)).sqrt();
    let mus = model.b_eigenvalues();

    // per sample: leading bound and per-ε minimum singular value
    let per_sample: Vec<(f64, Vec<f64>)> = ks
        .par_iter()
        .map(|&k| -> Result<(f64, Vec<f64>)> {
            let s = k * branch.sign();
            let mut worst_inv: f64 = 0.0;
            for &eps in eps_list {
                for &mu in &mus {
                    let d = (Complex64::new(1.0, 0.0) + I * eta * (eps * mu) / s).norm();
                    worst_inv = worst_inv.max(1.0 / d);
                }
            }
            let mut mins = vec![f64::INFINITY; eps_list.len()];
            for ell in 0..model.sectors.len() {
                let fam = model.family(ell, eta, branch)?;
                let t = fam.coupling_part(k)?;
                let t_norm = t.norm();
                for (e, &eps) in eps_list.iter().enumerate() {
                    mins[e] = mins[e].min(sigma_min_at(&t, eps, t_norm, floor));
                }
            }
            Ok((worst_inv, mins))
        })
        .collect::<Result<Vec<_>>>()?;
    let bound_ratio = per_sample.iter().map(|p| p.0).fold(0.0, f64::max) / bound;
    let rows = eps_list
        .iter()
        .enumerate()
        .map(|(e, &eps)| {
            let (i, m) =
                per_sample
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, p.1[e]))
                    .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            SectorFreeRow { eps, min_sigma: m, worst_k: ks.get(i).copied().unwrap_or_default(), pass: m > floor }
        })
        .collect();

    // winding over {r < |k| < κ} minus the cone of half-angle θ around the ray
    let theta = delta.atan();
    let dir = leading_direction(eta, branch);
    let mut intervals = Vec::new();
    if dir - theta > lo + 1e-9 {
        intervals.push((lo, (dir - theta).min(hi)));
    }
    if dir + theta < hi - 1e-9 {
        intervals.push(((dir + theta).max(lo), hi));
    }
    if dir - theta >= hi || dir + theta <= lo {
        intervals = vec![(lo, hi)];
    }
    let winding = if intervals.iter().any(|(a, b)| b > a) {
        let mut total = 0;
        for &(a, b) in intervals.iter().filter(|(a, b)| b > a) {
            let contour = Contour::annular_sector(INNER_FRACTION * kappa, kappa, a, b)?.with_samples(32);
            for ell in 0..model.sectors.len() {
                total += index_along_contour(&model.family(ell, eta, branch)?, &contour)?;
            }
        }
        Some(total)
    } else {
        None
    };
    Ok(SectorFreeReport {
        eta,
        delta,
        kappa,
        samples: ks.len(),
        boundary_only,
        bound_ratio,
        bound_pass: bound_ratio <= 1.0 + 1e-12,
        rows,
        winding,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSequence {
    pub nu: f64,
    /// r_0 > r_1 > ...; band ℓ is [r_{ℓ+1}, r_ℓ].
    pub radii: Vec<f64>,
}

/// Relative gaps μ_j - μ_{j+1} > ν μ_j of a descending spectrum, for the
/// largest ν among the candidates giving at least `min_gaps` of them. Band
/// edges sit at `frac` of each gap above μ_{j+1}.
pub fn gap_sequence(mu: &[f64], candidates: &[f64], min_gaps: usize, frac: f64) -> Result<GapSequence> {
    let mut sorted: Vec<f64> = mu.iter().copied().filter(|m| *m > 0.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted.len() < 2 {
        return Err(Error::InvalidInput("spectrum too short for a gap sequence".into()));
    }
    let mut cands = candidates.to_vec();
    cands.sort_by(|a, b| b.total_cmp(a));
    for &nu in &cands {
        let gaps: Vec<usize> = (0..sorted.len() - 1).filter(|&j| sorted[j] - sorted[j + 1] > nu * sorted[j]).collect();
        if gaps.len() < min_gaps {
            continue;
        }
        let dist = |r: f64| sorted.iter().map(|m| (m - r).abs()).fold(f64::INFINITY, f64::min);
        let mut radii = vec![sorted[0] * (1.0 + nu)];
        for j in gaps {
            let r = sorted[j + 1] + frac * (sorted[j] - sorted[j + 1]);
            if dist(r) >= 0.5 * nu * r {
                radii.push(r);
            }
        }
        return Ok(GapSequence { nu, radii });
    }
    Err(Error::InvalidInput(format!("no ν among {candidates:?} gives {min_gaps} relative gaps")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayPoint {
    pub k: Complex64,
    pub z: Complex64,
    pub multiplicity: i64,
    pub sector: usize,
    /// Angle between z and the ray of argument 2 Arg η ∓ π.
    pub angle_error: f64,
    pub in_strip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayBand {
    pub ell: usize,
    pub r_hi: f64,
    pub r_lo: f64,
    pub toeplitz_band_count: usize,
    pub winding_full: i64,
    pub winding_leading: i64,
    pub rouche_equal: bool,
    pub predicted: Vec<Complex64>,
    pub located: Vec<RayPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayReport {
    pub eta: Complex64,
    pub branch: Branch,
    pub delta: f64,
    pub nu: f64,
    pub ray_arg: f64,
    pub bands: Vec<RayBand>,
}

/// z inside the numerical-range strip of V and on the side fixed by Arg η.
fn in_strip(model: &Pauli3DModel, eta: Complex64, z: Complex64) -> bool {
    let tol = 1e-9 * z.norm().max(1e-300);
    let side = eta.im.signum();
    z.im.abs() <= model.pot.sup_norm() + tol && side * z.im >= -tol
}

/// Contour counts on the trapezoids Λ_ℓ mapped by k = ∓iεη k̃, for the first
/// `bands` gap bands of σ(ℬ).
pub fn accumulation_ray_3d(model: &Pauli3DModel, eta: Complex64, bands: usize, delta: f64) -> Result<RayReport> {
    let branch =
        Branch::accumulating(eta).ok_or_else(|| Error::InvalidInput("Arg η must lie in (π/2, π) or (-π, -π/2)".into()))?;
    if !model.pot.is_nonnegative() {
        return Err(Error::InvalidInput("the accumulation count needs W ≥ 0".into()));
    }
    let mus = model.b_eigenvalues();
    let toeplitz = model.toeplitz_w11()?;
    let mut last_err = None;
    for frac in [0.5, 0.4] {
        let gaps = gap_sequence(&mus, &[0.5, 0.3, 0.2, 0.1], bands.max(1), frac)?;
        match ray_bands(model, eta, branch, bands, delta, &gaps, &mus, &toeplitz) {
            Ok(b) => {
                return Ok(RayReport {
                    eta,
                    branch,
                    delta,
                    nu: gaps.nu,
                    ray_arg: 2.0 * eta.arg() - branch.sign() * PI,
                    bands: b,
                });
            }
            Err(e @ Error::OnContour { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

#[allow(clippy::too_many_arguments)]
fn ray_bands(
    model: &Pauli3DModel,
    eta: Complex64,
    branch: Branch,
    bands: usize,
    delta: f64,
    gaps: &GapSequence,
    mus: &[f64],
    toeplitz: &crate::toeplitz::ToeplitzOperator,
) -> Result<Vec<RayBand>> {
    let eps = model.eps();
    let scale = -I * eta * (eps * branch.sign());
    let ray = 2.0 * eta.arg() - branch.sign() * PI;
    let n = bands.min(gaps.radii.len().saturating_sub(1));
    let mut out = Vec::with_capacity(n);
    for ell in 0..n {
        let (r_hi, r_lo) = (gaps.radii[ell], gaps.radii[ell + 1]);
        let contour = Contour::trapezoid(r_lo, r_hi, delta)?.scaled(scale).with_samples(32);
        let per: Vec<(i64, i64, Vec<RayPoint>)> = (0..model.sectors.len())
            .into_par_iter()
            .map(|sec| -> Result<_> {
                let full = model.family(sec, eta, branch)?;
                let lead = model.leading_family(sec, eta, branch)?;
                let wf = index_along_contour(&full, &contour)?;
                let wl = index_along_contour(&lead, &contour)?;
                let mut pts = Vec::new();
                if wf != 0 {
                    let mut o = search_options_3d();
                    o.seeds.push(model.leading_prediction(sec, eta, branch));
                    let rep = zeros_inside(&full, &contour, &o)?;
                    for v in rep.values {
                        let z = v.z * v.z;
                        pts.push(RayPoint {
                            k: v.z,
                            z,
                            multiplicity: v.multiplicity,
                            sector: sec,
                            angle_error: angular_distance(z.arg(), ray),
                            in_strip: in_strip(model, eta, z),
                        });
                    }
                }
                Ok((wf, wl, pts))
            })
            .collect::<Result<Vec<_>>>()?;
        let winding_full: i64 = per.iter().map(|p| p.0).sum();
        let winding_leading: i64 = per.iter().map(|p| p.1).sum();
        let located: Vec<RayPoint> = per.into_iter().flat_map(|p| p.2).collect();
        let predicted =
            mus.iter().filter(|&&m| m > r_lo && m < r_hi).map(|&m| Complex64::from_polar(eps * eps * m * m, ray)).collect();
        let toeplitz_band_count = toeplitz.counting(r_lo)? - toeplitz.counting(r_hi)?;
        out.push(RayBand {
            ell,
            r_hi,
            r_lo,
            toeplitz_band_count,
            winding_full,
            winding_leading,
            rouche_equal: winding_full == winding_leading,
            predicted,
            located,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonReport {
    pub delta: f64,
    pub nu: f64,
    pub gamma: f64,
    pub q_order: usize,
    /// Sampled sup of ‖𝒜(k)‖ over the closed quarter disk.
    pub a_sup_sampled: f64,
    /// 1.2 × the sampled sup; an estimate, not a certificate.
    pub c_estimate: f64,
    pub c1: f64,
    pub c_delta_nu: f64,
    pub c0: f64,
    pub eps0: f64,
    /// Largest ε on the ladder ε₀ 2^j ≤ cap passing the sector-free check.
    pub empirical_eps: f64,
    pub eps_cap: f64,
    pub ratio: f64,
}

/// C₁(δ, ν) = δ max(δ⁻¹, (ν/2)⁻¹).
pub fn c1_constant(delta: f64, nu: f64) -> f64 {
    delta * (1.0 / delta).max(2.0 / nu)
}

/// C(δ, ν) = √(1 + δ²) max(δ⁻¹, (ν/2)⁻¹).
pub fn c_delta_nu(delta: f64, nu: f64) -> f64 {
    (1.0 + delta * delta).sqrt() * (1.0 / delta).max(2.0 / nu)
}

/// ε₀ = C₀ min(1, C₁⁻¹ e^{-Γ (C₁+1)^q}) with C₀ = (C √(1 + δ⁻²))⁻¹.
pub fn eps0_formula(c: f64, delta: f64, nu: f64, gamma: f64, q_order: usize) -> (f64, f64) {
    let c0 = 1.0 / (c * (1.0 + delta.powi(-2)).sqrt());
    let c1 = c1_constant(delta, nu);
    let tail = (-gamma * (c1 + 1.0).powi(q_order.max(1) as i32)).exp() / c1;
    (c0, c0 * tail.min(1.0))
}

/// Sampled sup of the operator norm of 𝒜(k) over the closed quarter disk.
pub fn sampled_a_sup(model: &Pauli3DModel, eta: Complex64, branch: Branch) -> Result<f64> {
    let kappa = model.kappa();
    let (lo, hi) = branch.arg_range();
    let mut ks = Vec::new();
    for i in 0..6 {
        let r = INNER_FRACTION * kappa * (1.0 / INNER_FRACTION).powf(i as f64 / 5.0) * (1.0 - 1e-9);
        for j in 0..5 {
            ks.push(Complex64::from_polar(r, lo + (hi - lo) * j as f64 / 4.0));
        }
    }
    let norms = ks
        .par_iter()
        .map(|&k| -> Result<f64> {
            let mut best: f64 = 0.0;
            for ell in 0..model.sectors.len() {
                let a = model.family(ell, eta, branch)?.regular_part(k)?;
                best = best.max(singular_values(&a).into_iter().fold(0.0, f64::max));
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}

/// ε₀ from the sampled constants, against the largest ε on a doubling ladder
/// from ε₀ (capped at `eps_cap`) for which σ_min(I + T) > 0 holds on the
/// sector samples.
#[allow(clippy::too_many_arguments)]
pub fn epsilon_threshold(
    model: &Pauli3DModel,
    eta: Complex64,
    delta: f64,
    nu: f64,
    gamma: f64,
    q_order: usize,
    n_samples: usize,
    eps_cap: f64,
) -> Result<EpsilonReport> {
    let branch = if eta.arg() >= 0.0 { Branch::Plus } else { Branch::Minus };
    let a_sup = sampled_a_sup(model, eta, branch)?;
    let c = 1.2 * a_sup;
    let (c0, eps0) = eps0_formula(c, delta, nu, gamma, q_order);
    let ladder: Vec<f64> = (0..=60).map(|j| eps0 * 2f64.powi(j)).take_while(|&e| e <= eps_cap.max(eps0)).collect();
    let ks = sample_sector_3d(eta, delta, model.kappa(), n_samples, branch);
    let floor = 1e-8;
    // highest ladder index still passing at every sample seen so far
    let mut top: Option<usize> = Some(ladder.len() - 1);
    'outer: for &k in &ks {
        for ell in 0..model.sectors.len() {
            let t = model.family(ell, eta, branch)?.coupling_part(k)?;
            let t_norm = t.norm();
            while let Some(j) = top {
                if sigma_min_at(&t, ladder[j], t_norm, floor) > floor {
                    break;
                }
                top = j.checked_sub(1);
            }
            if top.is_none() {
                break 'outer;
            }
        }
    }
    let empirical_eps = top.map_or(0.0, |j| ladder[j]);
    Ok(EpsilonReport {
        delta,
        nu,
        gamma,
        q_order,
        a_sup_sampled: a_sup,
        c_estimate: c,
        c1: c1_constant(delta, nu),
        c_delta_nu: c_delta_nu(delta, nu),
        c0,
        eps0,
        empirical_eps,
        eps_cap,
        ratio: empirical_eps / eps0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalfRingRow {
    pub r: f64,
    pub nu: f64,
    pub count: i64,
    pub toeplitz_trace: usize,
    /// count / (Tr 1_(r,∞)(p𝐕₁₁p) |ln r| + 1).
    pub ratio: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalfRingReport {
    pub branch: Branch,
    pub rows: Vec<HalfRingRow>,
    /// Least-squares slope of the ratio against |ln r|.
    pub trend: f64,
    pub max_ratio: f64,
}

/// Characteristic values with z in the clipped half ring D^ν(r², 4r²),
/// ν = nu_frac r², against Tr 1_(r,∞)(p𝐕₁₁p) |ln r|.
pub fn verify_halfring_bound_3d(
    model: &Pauli3DModel,
    eta: Complex64,
    branch: Branch,
    rs: &[f64],
    nu_frac: f64,
) -> Result<HalfRingReport> {
    if !(nu_frac > 0.0 && nu_frac < 2.0) {
        return Err(Error::InvalidInput("need 0 < ν < 2r²".into()));
    }
    let toeplitz = model.toeplitz_v11()?;
    let mut rows = Vec::with_capacity(rs.len());
    for &r in rs {
        if !(r > 0.0 && 2.0 * r < model.kappa()) {
            return Err(Error::InvalidInput(format!("ring radius {r:.3e} must satisfy 0 < 2r < κ")));
        }
        let nu = nu_frac * r * r;
        let scan = scan_quarter_3d(model, eta, branch, r, 2.0 * r)?;
        let count = scan
            .values
            .iter()
            .filter(|v| KPlaneGeometry::in_clipped_ring(v.z, branch, r * r, 4.0 * r * r, nu))
            .map(|v| v.multiplicity)
            .sum();
        let t = toeplitz.counting(r)?;
        rows.push(HalfRingRow {
            r,
            nu,
            count,
            toeplitz_trace: t,
            ratio: count as f64 / (t as f64 * r.ln().abs() + 1.0),
            consistent: scan.consistent,
        });
    }
    let x: Vec<f64> = rows.iter().map(|row| row.r.ln().abs()).collect();
    let y: Vec<f64> = rows.iter().map(|row| row.ratio).collect();
    let trend = if rows.len() >= 2 { linear_fit(&x, &y).0 } else { 0.0 };
    let max_ratio = y.iter().copied().fold(0.0, f64::max);
    Ok(HalfRingReport { branch, rows, trend, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec3d::tests::gaussian_model;
    use crate::spec3d::Model3DOptions;

    fn opts() -> Model3DOptions {
        Model3DOptions { k_count: 8, levels: 3, n_par: 129, m_x: 8, ..Model3DOptions::default() }
    }

    #[test]
    fn threshold_constants() {
        assert!((c1_constant(1.0, 2.0) - 1.0).abs() < 1e-15);
        assert!((c_delta_nu(1.0, 2.0) - 2f64.sqrt()).abs() < 1e-15);
        let (c0, _) = eps0_formula(3.0, 1e8, 0.5, 1.0, 1);
        assert!((c0 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gap_sequence_on_geometric_spectrum() {
        let mu: Vec<f64> = (0..10).map(|j| 3f64.powi(-j)).collect();
        let g = gap_sequence(&mu, &[0.5, 0.3, 0.2, 0.1], 5, 0.5).unwrap();
        assert_eq!(g.nu, 0.5);
        assert_eq!(g.radii.len(), 10);
        assert!((g.radii[1] - (1.0 / 3.0 + 1.0) / 2.0).abs() < 1e-15);
        assert!(gap_sequence(&[1.0, 0.99, 0.98], &[0.5], 1, 0.5).is_err());
    }

    #[test]
    fn sampler_stays_in_the_cone() {
        let eta = Complex64::from_polar(1.0, 2.0);
        let ks = sample_sector_3d(eta, 0.5, 0.5, 300, Branch::Plus);
        assert_eq!(ks.len(), 300);
        for k in ks {
            assert!(KPlaneGeometry::in_c_delta(k / eta, 0.5 + 1e-9));
            assert!(k.re >= 0.0 && k.im >= 0.0 && k.norm() < 0.5);
        }
        // the open quarter plane misses η C_1 for Arg η = 3π/4
        let edge = sample_sector_3d(Complex64::from_polar(1.0, 0.75 * PI), 1.0, 0.5, 100, Branch::Plus);
        assert!(edge.iter().all(|k| k.arg().abs() < 1e-12 || (k.arg() - 0.5 * PI).abs() < 1e-12));
    }

    #[test]
    fn zero_coupling_is_sector_free() {
        let eta = Complex64::from_polar(1.0, 2.0);
        let m = gaussian_model(0.0, eta, opts());
        let rep = verify_sector_free_3d(&m, eta, 0.5, &[0.0], 50, 0.5).unwrap();
        assert!((rep.rows[0].min_sigma - 1.0).abs() < 1e-12, "{rep:?}");
        assert!(rep.bound_pass);
    }

    #[test]
    fn leading_bands_count_sector_values() {
        let eta = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
        let m = gaussian_model(0.01, eta, Model3DOptions { leading_order: true, ..opts() });
        let rep = accumulation_ray_3d(&m, eta, 2, 0.1f64.tan()).unwrap();
        for b in &rep.bands {
            assert_eq!(b.winding_full, 1);
            assert!(b.rouche_equal);
            assert_eq!(b.located.len(), 1);
            let p = &b.located[0];
            assert!(p.angle_error < 1e-8 && p.in_strip);
            assert!((p.z - b.predicted[0]).norm() < 1e-8 * p.z.norm());
        }
    }
}

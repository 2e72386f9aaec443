//! One runner per experiment kind. Each writes its tables and plots into the
//! output directory and returns the report it also saves there.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::Context;
use paulispec::basis::build_zero_modes;
use paulispec::detcheck::run_detcheck;
use paulispec::field::make_radial_field;
use paulispec::spec2d::{
    counting_vs_toeplitz_2d, eigenvalues_near_zero_2d_with, in_sector, sector_search_options, upper_ratio_trend,
    verify_localization_2d, Pauli2DModel,
};
use paulispec::spec3d::{accumulation_ray_3d, assemble_k_and_b, scan_quarter_3d, verify_sector_free_3d, Branch, Pauli3DModel};
use paulispec::toeplitz::{self, fit_regime, Regime, Symbol};
use paulispec::{AdmissibleField, Complex64, Profile};
use serde::Serialize;

use crate::config::{ExperimentConfig, Kind};
use crate::report::{Report, Sink};
use crate::svg::{arc, wedge, Layer, Plot};

/// Floor of σ_min(I + 𝒯) on the sector samples.
const SECTOR_FREE_FLOOR: f64 = 0.1;
/// Number of leading eigenvalues compared with first-order predictions.
const LEADING_COMPARED: usize = 5;

pub fn run(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<Report> {
    cfg.validate()?;
    let mut sink = Sink::new(out)?;
    let mut report = Report::new(cfg);
    match cfg.kind {
        Kind::Field => run_field(cfg, &mut sink, &mut report),
        Kind::Toeplitz => run_toeplitz(cfg, &mut sink, &mut report),
        Kind::Spec2d => run_spec2d(cfg, &mut sink, &mut report),
        Kind::Spec3d => run_spec3d(cfg, &mut sink, &mut report),
        Kind::Detcheck => run_detcheck_kind(cfg, &mut sink, &mut report),
    }
    .with_context(|| format!("{} experiment", cfg.kind.name()))?;
    sink.finish(report)
}

fn field_of(cfg: &ExperimentConfig) -> anyhow::Result<AdmissibleField> {
    make_radial_field(cfg.field.b0, cfg.field.phi_tilde.clone()).context("field")
}

/// Thresholds r0·10^(-i/per_decade), i ≥ first, down to r; those below ten
/// times the Toeplitz floor are dropped and reported separately.
fn thresholds(r: f64, r0: f64, per_decade: usize, floor: f64, first: usize) -> (Vec<f64>, usize) {
    let mut kept = Vec::new();
    let mut dropped = 0;
    for i in first.. {
        let t = r0 * 10f64.powf(-(i as f64) / per_decade as f64);
        if t < r * (1.0 - 1e-12) {
            break;
        }
        if t >= 10.0 * floor {
            kept.push(t);
        } else {
            dropped += 1;
        }
    }
    (kept, dropped)
}

#[derive(Serialize)]
struct FieldRow {
    r: f64,
    b: f64,
    phi_tilde: f64,
}

fn run_field(cfg: &ExperimentConfig, sink: &mut Sink, report: &mut Report) -> anyhow::Result<()> {
    let field = field_of(cfg)?;
    let rows: Vec<FieldRow> = (0..=200)
        .map(|i| {
            let r = 0.5 * field.r_max * i as f64 / 200.0;
            FieldRow { r, b: field.b(r), phi_tilde: field.phi_tilde_at(r) }
        })
        .collect();
    sink.csv("field.csv", &["r", "b", "phi_tilde"], &rows)?;
    let plot = Plot::new("magnetic field", "r", "b(r)")
        .layer(Layer::Line { pts: rows.iter().map(|p| (p.r, p.b)).collect(), color: "#1f77b4", dashed: false })
        .layer(Layer::Line { pts: rows.iter().map(|p| (p.r, field.b0)).collect(), color: "#999", dashed: true });
    sink.text("field.svg", &plot.render())?;

    let expected = 2.0 * field.b0 * (-2.0 * field.osc).exp();
    report.at_most("gap_constant", (field.zeta - expected).abs(), 0.0, "ζ = 2 b0 exp(-2 osc)");
    report.at_most("poisson_roundtrip", field.poisson_roundtrip_error(), 1e-8, "re-solved radial Poisson equation");
    report.headline("zeta", field.zeta);
    report.headline("osc", field.osc);
    report.headline("b_at_0", field.b(0.0));
    report.details = serde_json::to_value(&field)?;
    Ok(())
}

#[derive(Serialize)]
struct EigenRow {
    k: usize,
    mu_k: f64,
}

#[derive(Serialize)]
struct CountRow {
    r: f64,
    n_r: usize,
    model_r: f64,
}

/// Closed-form spectrum of a Gaussian symbol on the constant-field zero modes.
fn gaussian_oracle(field: &AdmissibleField, symbol: &Profile, k: usize) -> Option<f64> {
    match symbol {
        Profile::Gaussian { amp, width } if field.is_constant() => {
            let half = 0.5 * field.b0;
            Some(amp * (half / (half + 1.0 / (width * width))).powi(k as i32 + 1))
        }
        _ => None,
    }
}

fn fit_check(report: &mut Report, regime: Regime, fit: &toeplitz::FitReport) {
    match regime {
        Regime::H1 { m } => {
            let target = -2.0 / m;
            report.at_most(
                "regime_fit",
                (fit.slope - target).abs(),
                0.1 * target.abs(),
                format!("log-log slope against {target}"),
            );
        }
        Regime::H2 { .. } => report.at_most("regime_fit", fit.max_abs_dev, 1.0, "|n(r) - model(r)|"),
        Regime::H3 => report.at_most("regime_fit", fit.max_rel_dev, 0.25, "|n(r)/model(r) - 1|"),
    }
}

fn run_toeplitz(cfg: &ExperimentConfig, sink: &mut Sink, report: &mut Report) -> anyhow::Result<()> {
    let field = field_of(cfg)?;
    let basis = build_zero_modes(&field, cfg.truncation.k, cfg.truncation.basis_order)?;
    let symbol = &cfg.toeplitz.symbol;
    let op = toeplitz::assemble(&basis, &Symbol::Radial(symbol.clone()))?;
    let rows: Vec<EigenRow> = op.eigs.iter().enumerate().map(|(k, &mu_k)| EigenRow { k, mu_k }).collect();
    sink.csv("eigenvalues.csv", &["k", "mu_k"], &rows)?;

    let top = op.eigs[0].abs();
    let lowest = op.eigs.iter().copied().fold(f64::INFINITY, f64::min);
    report.at_least("spectrum_nonnegative", lowest, -1e-14 * top.max(1.0), "smallest eigenvalue");
    if gaussian_oracle(&field, symbol, 0).is_some() {
        let n = op.eigs.len().min(21);
        let err =
            (0..n).map(|k| (op.eigs[k] / gaussian_oracle(&field, symbol, k).unwrap_or(f64::NAN) - 1.0).abs()).fold(0.0, f64::max);
        report.at_most("gaussian_oracle", err, 1e-8, format!("relative error of the first {n} eigenvalues"));
    }
    for (k, mu) in op.eigs.iter().take(LEADING_COMPARED).enumerate() {
        report.headline(format!("mu_{k}"), *mu);
    }

    let g = &cfg.geometry;
    let (ts, dropped) = thresholds(g.r, g.r0, g.per_decade, op.floor(), 0);
    report.holds(
        "counting_range_resolved",
        dropped == 0 && !ts.is_empty(),
        format!("{dropped} thresholds below ten times the truncation floor {:.3e}", op.floor()),
    );
    if ts.is_empty() {
        return Ok(());
    }
    let mut curve = op.curve(&ts)?;
    let mut fit_detail = serde_json::Value::Null;
    if let Some(spec) = cfg.toeplitz.regime {
        let regime = spec.regime(field.b0);
        match fit_regime(&mut curve, regime) {
            Ok(fit) => {
                fit_check(report, regime, &fit);
                fit_detail = serde_json::to_value(&fit)?;
            }
            Err(e) => report.holds("regime_fit", false, e.to_string()),
        }
    }
    let counts: Vec<CountRow> = curve
        .thresholds
        .iter()
        .zip(&curve.counts)
        .enumerate()
        .map(|(i, (&r, &n_r))| CountRow { r, n_r, model_r: curve.model.get(i).copied().unwrap_or(f64::NAN) })
        .collect();
    for c in &counts {
        report.headline(format!("n_r{:.3e}", c.r), c.n_r as f64);
    }
    sink.csv("counting.csv", &["r", "n_r", "model_r"], &counts)?;
    let mut plot = Plot::new("Toeplitz counting function", "log10 r", "n(r)").layer(Layer::Points {
        pts: counts.iter().map(|c| (c.r.log10(), c.n_r as f64)).collect(),
        color: "#1f77b4",
        radius: 3.0,
    });
    if !curve.model.is_empty() {
        plot = plot.layer(Layer::Line {
            pts: counts.iter().map(|c| (c.r.log10(), c.model_r)).collect(),
            color: "#d62728",
            dashed: true,
        });
    }
    sink.text("counting.svg", &plot.render())?;
    report.details = serde_json::json!({ "available_decades": op.available_decades(), "floor": op.floor(), "fit": fit_detail });
    Ok(())
}

#[derive(Serialize)]
struct Eigen2DRow {
    re_mu: f64,
    im_mu: f64,
    mult: i64,
    abs_mu: f64,
    arg_mu_over_eta: f64,
    in_sector: bool,
}

/// Largest relative distance from the leading predictions in (r, r0) to the
/// nearest computed eigenvalue, over the first few by modulus.
fn leading_mismatch(predictions: &[Complex64], found: &[Complex64], r: f64, r0: f64) -> (f64, usize) {
    let mut preds: Vec<Complex64> = predictions.iter().copied().filter(|p| p.norm() > r && p.norm() < r0).collect();
    preds.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    preds.truncate(LEADING_COMPARED);
    let worst =
        preds.iter().map(|p| found.iter().map(|m| (m - p).norm() / p.norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max);
    (worst, preds.len())
}

fn counting_table(report: &mut Report, sink: &mut Sink, rows: &[paulispec::spec2d::CountingRow]) -> anyhow::Result<()> {
    sink.csv("counting.csv", &["r", "eigen_count", "toeplitz_count", "ratio", "upper_ratio"], rows)?;
    let compared: Vec<_> = rows.iter().filter(|r| r.toeplitz_count > 0).collect();
    let worst = compared.iter().map(|r| (r.ratio.ln()).abs()).fold(0.0, f64::max);
    report.at_most(
        "counting_ratio",
        worst,
        1.25f64.ln(),
        format!("max |ln(count / Toeplitz trace)| over {} thresholds", compared.len()),
    );
    // the bound is asymptotic, so the trend is read on the three deepest decades
    let deepest = rows.iter().map(|r| r.r).fold(f64::INFINITY, f64::min);
    let tail: Vec<_> = rows.iter().filter(|r| r.r <= deepest * 1e3 * (1.0 + 1e-9)).cloned().collect();
    let populated = tail.iter().filter(|r| r.upper_ratio > 0.0).count();
    let span = rows.iter().map(|r| r.r).fold(0.0, f64::max) / deepest;
    if span >= 1e3 * (1.0 - 1e-9) && populated >= 3 {
        let slope = upper_ratio_trend(&tail);
        report.at_most(
            "upper_ratio_trend",
            slope.abs(),
            0.1,
            format!("slope of ln ratio against ln r on [{deepest:.1e}, {:.1e}], {populated} populated thresholds", deepest * 1e3),
        );
    }
    Ok(())
}

fn run_spec2d(cfg: &ExperimentConfig, sink: &mut Sink, report: &mut Report) -> anyhow::Result<()> {
    let field = field_of(cfg)?;
    let pot = cfg.matrix_potential()?;
    let model = Pauli2DModel::new(field, pot, cfg.model2d_options())?;
    let eta = cfg.potential.eta.value();
    let g = &cfg.geometry;
    let opts = paulispec::detindex::SearchOptions { contour_samples: cfg.truncation.contour_samples, ..sector_search_options() };
    let spec = eigenvalues_near_zero_2d_with(&model, eta, g.r, g.r0, &opts)?;

    let rows: Vec<Eigen2DRow> = spec
        .eigenvalues
        .iter()
        .map(|e| {
            let tol = 1e-12 * e.abs();
            Eigen2DRow {
                re_mu: e.mu.re,
                im_mu: e.mu.im,
                mult: e.multiplicity,
                abs_mu: e.abs(),
                arg_mu_over_eta: paulispec::spec2d::arg_over(e.mu, eta),
                in_sector: in_sector(e.mu / eta, g.delta, tol) || in_sector(-e.mu / eta, g.delta, tol),
            }
        })
        .collect();
    sink.csv("eigenvalues.csv", &["re_mu", "im_mu", "mult", "abs_mu", "arg_mu_over_eta", "in_sector"], &rows)?;

    let loc = verify_localization_2d(&spec, eta, 0, g.delta, g.r, g.r0);
    report.at_most("localization", loc.offenders.len() as f64, 0.0, format!("eigenvalues outside ±η Γ^δ among {}", loc.checked));
    report.holds("winding_consistent", spec.consistent, "multiplicities add up to each sector's boundary winding");
    let strip = spec.strip_violations(1e-12);
    report.at_most("numerical_range_strip", strip.len() as f64, 0.0, "eigenvalues with |Im μ| > ‖V‖∞");
    let found: Vec<Complex64> = spec.eigenvalues.iter().map(|e| e.mu).collect();
    let (mismatch, compared) = leading_mismatch(&model.leading_predictions(eta), &found, g.r, g.r0);
    report.at_most("leading_order", mismatch, 0.1, format!("relative distance to the first {compared} first-order predictions"));

    let t = model.toeplitz_abs_v11()?;
    let (ts, dropped) = thresholds(g.r, g.r0, g.per_decade, t.floor(), 1);
    report.holds("counting_range_resolved", dropped == 0, format!("{dropped} thresholds below ten times the truncation floor"));
    let counts = counting_vs_toeplitz_2d(&spec, &t, &ts)?;
    counting_table(report, sink, &counts)?;

    report.headline("count", spec.eigenvalues.iter().map(|e| e.multiplicity).sum::<i64>() as f64);
    for (i, e) in spec.eigenvalues.iter().take(LEADING_COMPARED).enumerate() {
        report.headline(format!("mu_{i}_re"), e.mu.re);
        report.headline(format!("mu_{i}_im"), e.mu.im);
    }

    let reach = found.iter().map(|m| m.norm()).fold(0.0, f64::max).max(1e-300) * 1.2;
    let half = g.delta.atan();
    let a = eta.arg();
    let plot = Plot::new("eigenvalues near 0 with the sectors ±η Γ^δ", "Re μ", "Im μ")
        .layer(Layer::Area { pts: wedge(reach, a - half, a + half), color: "#2ca02c", opacity: 0.2 })
        .layer(Layer::Area { pts: wedge(reach, a + PI - half, a + PI + half), color: "#2ca02c", opacity: 0.2 })
        .layer(Layer::Points { pts: found.iter().map(|m| (m.re, m.im)).collect(), color: "#d62728", radius: 3.0 });
    sink.text("eigenvalues.svg", &plot.render())?;
    report.details = serde_json::json!({
        "zeta": model.zeta(),
        "sup_norm_v": spec.sup_norm_v,
        "localization": loc,
        "counting": counts,
    });
    Ok(())
}

#[derive(Serialize)]
struct Zero3DRow {
    re_z: f64,
    im_z: f64,
    mult: i64,
    #[serde(rename = "in_E_sector")]
    in_e_sector: bool,
    on_ray_angle_error: f64,
}

#[derive(Serialize)]
struct BandRow {
    ell: usize,
    r_l: f64,
    r_l1: f64,
    toeplitz_band_count: usize,
    winding_count: i64,
    winding_leading: i64,
}

fn run_spec3d(cfg: &ExperimentConfig, sink: &mut Sink, report: &mut Report) -> anyhow::Result<()> {
    let field = field_of(cfg)?;
    let pot = cfg.matrix_potential()?;
    let model = Pauli3DModel::new(field, pot, cfg.model3d_options())?;
    let eta = cfg.potential.eta.value();
    let g = &cfg.geometry;
    let geometry = model.geometry;

    match assemble_k_and_b(&model) {
        Ok(kb) => {
            report.at_most("kk_star_identity", kb.identity_error, 1e-9, "max entry of K K* - diag p V11 p");
            for (i, b) in kb.b_eigenvalues.iter().take(LEADING_COMPARED).enumerate() {
                report.headline(format!("b_{i}"), *b);
            }
        }
        Err(e @ paulispec::Error::Consistency(_)) => report.holds("kk_star_identity", false, e.to_string()),
        Err(e) => return Err(e.into()),
    }

    let free = verify_sector_free_3d(&model, eta, g.delta, &[model.eps()], g.samples, SECTOR_FREE_FLOOR)?;
    let row = &free.rows[0];
    report.at_least(
        "sector_free_min_sigma",
        row.min_sigma,
        SECTOR_FREE_FLOOR,
        format!("σ_min(I + T) over {} samples of η C_δ", free.samples),
    );
    if let Some(w) = free.winding {
        report.at_most("sector_free_winding", w.abs() as f64, 0.0, "winding outside the excluded cone");
    }
    report.headline("sector_free_min_sigma", row.min_sigma);

    let mut zeros = Vec::new();
    let mut detail = serde_json::json!({ "zeta": model.zeta(), "kappa": model.kappa(), "sector_free": free });
    let branch = match Branch::accumulating(eta) {
        Some(branch) => {
            let rep = accumulation_ray_3d(&model, eta, g.bands, g.delta)?;
            let bands: Vec<BandRow> = rep
                .bands
                .iter()
                .map(|b| BandRow {
                    ell: b.ell,
                    r_l: b.r_hi,
                    r_l1: b.r_lo,
                    toeplitz_band_count: b.toeplitz_band_count,
                    winding_count: b.winding_full,
                    winding_leading: b.winding_leading,
                })
                .collect();
            sink.csv("bands.csv", &["ell", "r_l", "r_l1", "toeplitz_band_count", "winding_count", "winding_leading"], &bands)?;
            report.at_least("bands_examined", rep.bands.len() as f64, g.bands as f64, "gap bands with a contour");
            for b in &rep.bands {
                report.at_least(
                    &format!("band_{}_lower_bound", b.ell),
                    b.winding_full as f64,
                    b.toeplitz_band_count as f64,
                    "winding on the band contour against the Toeplitz band count",
                );
                report.headline(format!("band_{}_winding", b.ell), b.winding_full as f64);
                for p in &b.located {
                    zeros.push((p.z, p.multiplicity, p.angle_error));
                }
            }
            let worst = zeros.iter().map(|z| z.2).fold(0.0, f64::max);
            report.at_most("ray_angle", worst, 2.0 * g.theta, "angular distance of located z to the ray");
            detail["ray"] = serde_json::to_value(&rep)?;
            branch
        }
        None => {
            let branch = if eta.arg() >= 0.0 { Branch::Plus } else { Branch::Minus };
            let ray = 2.0 * eta.arg() - branch.sign() * PI;
            let scan = scan_quarter_3d(&model, eta, branch, g.r, g.r0)?;
            report.at_most(
                "no_values_near_zero",
                scan.boundary_total.abs().max(scan.values.len() as i64) as f64,
                0.0,
                "characteristic values in the scanned quarter disk",
            );
            for v in &scan.values {
                let z = v.z;
                zeros.push((z, v.multiplicity, paulispec::spec3d::angular_distance(z.arg(), ray)));
            }
            detail["scan"] = serde_json::to_value(&scan)?;
            branch
        }
    };
    let ray = 2.0 * eta.arg() - branch.sign() * PI;
    let rows: Vec<Zero3DRow> = zeros
        .iter()
        .map(|&(z, mult, err)| Zero3DRow {
            re_z: z.re,
            im_z: z.im,
            mult,
            in_e_sector: geometry.in_e_sector(z, branch, eta.arg(), g.theta),
            on_ray_angle_error: err,
        })
        .collect();
    sink.csv("zeros.csv", &["re_z", "im_z", "mult", "in_E_sector", "on_ray_angle_error"], &rows)?;
    report.headline("count", rows.iter().map(|r| r.mult).sum::<i64>() as f64);

    let reach = zeros.iter().map(|z| z.0.norm()).fold(0.0, f64::max);
    let reach = if reach > 0.0 { 1.5 * reach } else { geometry.kappa * geometry.kappa };
    let side = branch.sign();
    let plot = Plot::new("half ring with the excluded cone and the ray", "Re z", "Im z")
        .layer(Layer::Line { pts: arc(reach, 0.0, side * PI, 96), color: "#999", dashed: false })
        .layer(Layer::Area { pts: wedge(reach, ray - 2.0 * g.theta, ray + 2.0 * g.theta), color: "#ff7f0e", opacity: 0.25 })
        .layer(Layer::Line { pts: vec![(0.0, 0.0), (reach * ray.cos(), reach * ray.sin())], color: "#ff7f0e", dashed: true })
        .layer(Layer::Points { pts: zeros.iter().map(|z| (z.0.re, z.0.im)).collect(), color: "#d62728", radius: 3.0 });
    sink.text("halfring.svg", &plot.render())?;
    report.details = detail;
    Ok(())
}

#[derive(Serialize)]
struct PropertyRow {
    property: &'static str,
    value: f64,
}

fn run_detcheck_kind(cfg: &ExperimentConfig, sink: &mut Sink, report: &mut Report) -> anyhow::Result<()> {
    let rep = run_detcheck(&cfg.detcheck_options())?;
    let rows = [
        PropertyRow { property: "identity_failures", value: rep.identity_failures as f64 },
        PropertyRow { property: "ab_ba_max_rel", value: rep.ab_ba_max_rel },
        PropertyRow { property: "invertibility_failures", value: rep.invertibility_failures as f64 },
        PropertyRow { property: "index_failures", value: rep.index_failures as f64 },
        PropertyRow { property: "gamma", value: rep.gamma },
    ];
    sink.csv("properties.csv", &["property", "value"], &rows)?;
    report.at_most("det_of_identity", rep.identity_failures as f64, 0.0, format!("det_p(I) != 1 over {} cases", rep.cases));
    report.at_most("det_ab_ba", rep.ab_ba_max_rel, 1e-10, "relative gap between det_p(I - AB) and det_p(I - BA)");
    report.at_most("invertibility", rep.invertibility_failures as f64, 0.0, "I - T invertible iff det_p(I - T) != 0");
    report.at_most(
        "index_multiplicity",
        rep.index_failures as f64,
        0.0,
        format!("winding against placed zeros, {} families", rep.families),
    );
    report.headline("gamma", rep.gamma);
    report.details = serde_json::to_value(&rep)?;
    Ok(())
}

//! Convergence probe: rerun with one truncation parameter doubled and compare
//! the headline numbers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::config::{ExperimentConfig, Kind};
use crate::run::run;

/// Relative drift above which a headline number is flagged.
pub const DRIFT_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProbeParam {
    /// Zero modes / sectors.
    K,
    /// Landau levels.
    L,
    /// Longitudinal box half-length.
    R,
    /// Longitudinal grid size.
    NPar,
    QuadOrder,
    ContourSamples,
}

impl FromStr for ProbeParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "K" | "k" => ProbeParam::K,
            "L" | "l" | "levels" => ProbeParam::L,
            "R" | "x_max" => ProbeParam::R,
            "N∥" | "N_par" | "n_par" => ProbeParam::NPar,
            "quad_order" => ProbeParam::QuadOrder,
            "contour_samples" => ProbeParam::ContourSamples,
            _ => return Err(format!("unknown parameter {s:?}; expected K, L, R, N_par, quad_order or contour_samples")),
        })
    }
}

impl fmt::Display for ProbeParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeParam::K => "K",
            ProbeParam::L => "L",
            ProbeParam::R => "R",
            ProbeParam::NPar => "N_par",
            ProbeParam::QuadOrder => "quad_order",
            ProbeParam::ContourSamples => "contour_samples",
        })
    }
}

impl ProbeParam {
    /// Whether the experiment kind reads this parameter at all.
    pub fn used_by(self, kind: Kind) -> bool {
        match self {
            ProbeParam::K => matches!(kind, Kind::Toeplitz | Kind::Spec2d | Kind::Spec3d),
            ProbeParam::L => matches!(kind, Kind::Spec2d | Kind::Spec3d),
            ProbeParam::QuadOrder => matches!(kind, Kind::Toeplitz | Kind::Spec2d | Kind::Spec3d),
            ProbeParam::R | ProbeParam::NPar => kind == Kind::Spec3d,
            ProbeParam::ContourSamples => kind == Kind::Spec2d,
        }
    }

    /// Copy of the config with the parameter doubled.
    pub fn doubled(self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut c = cfg.clone();
        let t = &mut c.truncation;
        match self {
            ProbeParam::K => t.k *= 2,
            ProbeParam::L => t.levels *= 2,
            ProbeParam::R => t.x_max *= 2.0,
            // keeps the grid odd and nested
            ProbeParam::NPar => t.n_par = 2 * t.n_par - 1,
            ProbeParam::QuadOrder => {
                t.quad_order *= 2;
                t.basis_order *= 2;
            }
            ProbeParam::ContourSamples => t.contour_samples *= 2,
        }
        c
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub schema: &'static str,
    pub schema_version: u32,
    pub parameter: String,
    pub used: bool,
    pub base: BTreeMap<String, f64>,
    pub doubled: BTreeMap<String, f64>,
    /// Relative drift per headline number; keys present in only one run
    /// drift by infinity.
    pub drift: BTreeMap<String, f64>,
    pub max_drift: f64,
    pub limit: f64,
    pub flagged: Vec<String>,
    pub pass: bool,
}

fn rel_drift(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let scale = a.abs().max(b.abs());
    if scale == 0.0 || !scale.is_finite() {
        f64::INFINITY
    } else {
        (a - b).abs() / scale
    }
}

pub fn compare(parameter: ProbeParam, used: bool, base: BTreeMap<String, f64>, doubled: BTreeMap<String, f64>) -> ProbeReport {
    let mut drift = BTreeMap::new();
    for (k, a) in &base {
        drift.insert(k.clone(), doubled.get(k).map_or(f64::INFINITY, |b| rel_drift(*a, *b)));
    }
    for k in doubled.keys().filter(|k| !base.contains_key(*k)) {
        drift.insert(k.clone(), f64::INFINITY);
    }
    let max_drift = drift.values().copied().fold(0.0, f64::max);
    let flagged: Vec<String> = drift.iter().filter(|(_, d)| **d > DRIFT_LIMIT).map(|(k, _)| k.clone()).collect();
    ProbeReport {
        schema: "paulispec-probe",
        schema_version: 1,
        parameter: parameter.to_string(),
        used,
        pass: flagged.is_empty(),
        base,
        doubled,
        drift,
        max_drift,
        limit: DRIFT_LIMIT,
        flagged,
    }
}

/// Runs the config and its doubled copy into `out/base` and `out/doubled`
/// and writes `out/probe.json`.
pub fn convergence_probe(cfg: &ExperimentConfig, parameter: ProbeParam, out: &Path) -> anyhow::Result<ProbeReport> {
    let used = parameter.used_by(cfg.kind);
    let base = run(cfg, &out.join("base"))?.headline;
    let doubled = if used { run(&parameter.doubled(cfg), &out.join("doubled"))?.headline } else { base.clone() };
    let report = compare(parameter, used, base, doubled);
    // infinite drift has no JSON number; it is written as null
    std::fs::write(out.join("probe.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_and_flags() {
        let base = BTreeMap::from([("a".to_string(), 1.0), ("b".to_string(), 2.0), ("c".to_string(), 0.0)]);
        let doubled = BTreeMap::from([("a".to_string(), 1.001), ("b".to_string(), 2.5), ("c".to_string(), 0.0)]);
        let r = compare(ProbeParam::K, true, base, doubled);
        assert!((r.drift["a"] - 0.001 / 1.001).abs() < 1e-15);
        assert_eq!(r.drift["c"], 0.0);
        assert_eq!(r.flagged, vec!["b".to_string()]);
        assert!(!r.pass);
    }

    #[test]
    fn missing_keys_are_flagged() {
        let base = BTreeMap::from([("n".to_string(), 3.0)]);
        let r = compare(ProbeParam::K, true, base, BTreeMap::new());
        assert_eq!(r.flagged, vec!["n".to_string()]);
    }

    #[test]
    fn doubling_keeps_the_grid_odd() {
        let cfg = ExperimentConfig::preset(Kind::Spec3d);
        let d = ProbeParam::NPar.doubled(&cfg);
        assert_eq!(d.truncation.n_par, 2 * cfg.truncation.n_par - 1);
        assert!(d.validate().is_ok());
        assert_eq!("N∥".parse::<ProbeParam>().unwrap(), ProbeParam::NPar);
        assert!("Q".parse::<ProbeParam>().is_err());
    }
}

//! Experiment configuration: one JSON document per run.

use std::fmt;
use std::path::Path;

use anyhow::Context;
use paulispec::detcheck::DetCheckOptions;
use paulispec::spec2d::Model2DOptions;
use paulispec::spec3d::Model3DOptions;
use paulispec::toeplitz::Regime;
use paulispec::{Complex64, MatrixPotential, PotentialShape, Profile};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Field,
    Toeplitz,
    Spec2d,
    Spec3d,
    Detcheck,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Field => "field",
            Kind::Toeplitz => "toeplitz",
            Kind::Spec2d => "spec2d",
            Kind::Spec3d => "spec3d",
            Kind::Detcheck => "detcheck",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub b0: f64,
    /// Perturbation potential of the field; "zero" for a constant field.
    pub phi_tilde: Profile,
}

/// η as modulus and argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaSpec {
    pub modulus: f64,
    pub arg: f64,
}

impl EtaSpec {
    pub fn value(&self) -> Complex64 {
        MatrixPotential::polar_eta(self.modulus, self.arg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub shape: PotentialShape,
    pub eta: EtaSpec,
    pub eps: f64,
    /// Longitudinal factor g(X∥); only read by spec3d.
    pub longitudinal: Option<Profile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    /// Zero modes / angular sectors.
    pub k: usize,
    /// Landau levels per spin component.
    pub levels: usize,
    /// Half-length of the longitudinal box (3D).
    pub x_max: f64,
    /// Longitudinal grid points, odd (3D).
    pub n_par: usize,
    /// Longitudinal frame size (3D).
    pub m_x: usize,
    pub quad_order: usize,
    pub basis_order: usize,
    pub rel_cut: f64,
    pub contour_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// Inner radius of the searched annulus / smallest counting threshold.
    pub r: f64,
    /// Outer radius.
    pub r0: f64,
    pub delta: f64,
    /// Half-angle of the excluded cone around the 3D ray is 2θ.
    pub theta: f64,
    pub nu: f64,
    pub kappa: Option<f64>,
    /// Counting thresholds per decade.
    pub per_decade: usize,
    /// Gap bands examined on the 3D ray.
    pub bands: usize,
    /// Sample points for the 3D sector-free check.
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegimeSpec {
    H1 { m: f64 },
    H2 { beta: f64, decay: f64 },
    H3,
}

impl RegimeSpec {
    pub fn regime(self, b0: f64) -> Regime {
        match self {
            RegimeSpec::H1 { m } => Regime::H1 { m },
            RegimeSpec::H2 { beta, decay } => Regime::H2 { beta, decay, b0 },
            RegimeSpec::H3 => Regime::H3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToeplitzSpec {
    pub symbol: Profile,
    pub regime: Option<RegimeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetCheckSpec {
    pub cases: usize,
    pub dim: usize,
    pub families: usize,
    pub max_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: Kind,
    pub seed: u64,
    pub output_dir: Option<String>,
    pub field: FieldSpec,
    pub potential: PotentialSpec,
    pub truncation: Truncation,
    pub geometry: Geometry,
    pub toeplitz: ToeplitzSpec,
    pub detcheck: DetCheckSpec,
}

/// Invalid configuration value and where it sits in the document.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn bad(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.into(), message: message.into() }
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(path, format!("must be positive and finite, got {v}")))
    }
}

fn at_least(path: &str, v: usize, min: usize) -> Result<(), ConfigError> {
    if v >= min {
        Ok(())
    } else {
        Err(bad(path, format!("must be at least {min}, got {v}")))
    }
}

impl ExperimentConfig {
    /// Reference configuration of each experiment kind.
    pub fn preset(kind: Kind) -> Self {
        let gaussian = Profile::gaussian(1.0, 1.0);
        let m2 = Model2DOptions::default();
        let m3 = Model3DOptions::default();
        let mut cfg = Self {
            schema_version: SCHEMA_VERSION,
            kind,
            seed: 7,
            output_dir: None,
            field: FieldSpec { b0: 1.0, phi_tilde: Profile::Zero },
            potential: PotentialSpec {
                shape: PotentialShape::diagonal(gaussian.clone(), Profile::Zero),
                eta: EtaSpec { modulus: 1.0, arg: std::f64::consts::FRAC_PI_4 },
                eps: 0.05,
                longitudinal: None,
            },
            truncation: Truncation {
                k: m2.k_count,
                levels: m2.levels,
                x_max: m3.x_max,
                n_par: m3.n_par,
                m_x: m3.m_x,
                quad_order: m2.quad_order,
                basis_order: m2.basis_order,
                rel_cut: m2.rel_cut,
                contour_samples: 48,
            },
            geometry: Geometry {
                r: 1e-12,
                r0: 0.2,
                delta: 0.2,
                theta: 0.1,
                nu: 0.5,
                kappa: None,
                per_decade: 4,
                bands: 3,
                samples: 1000,
            },
            toeplitz: ToeplitzSpec { symbol: gaussian.clone(), regime: None },
            detcheck: {
                let d = DetCheckOptions::default();
                DetCheckSpec { cases: d.cases, dim: d.dim, families: d.families, max_order: d.max_order }
            },
        };
        match kind {
            Kind::Toeplitz => {
                cfg.truncation.k = 64;
                cfg.geometry.r = 1e-8;
                cfg.geometry.r0 = 1e-1;
                cfg.geometry.per_decade = 4;
                cfg.toeplitz.regime = Some(RegimeSpec::H2 { beta: 1.0, decay: 1.0 });
            }
            Kind::Spec3d => {
                cfg.potential.eta = EtaSpec { modulus: 1.0, arg: 2.0 * std::f64::consts::FRAC_PI_3 };
                cfg.potential.eps = 0.01;
                cfg.potential.longitudinal = Some(gaussian);
                cfg.truncation.k = m3.k_count;
                cfg.truncation.levels = m3.levels;
                cfg.truncation.contour_samples = 32;
                cfg.geometry.r = 1e-4 * 0.5 * 2f64.sqrt();
                cfg.geometry.r0 = 0.5 * 2f64.sqrt();
                cfg.geometry.delta = 0.1f64.tan();
            }
            _ => {}
        }
        cfg
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("config is not a valid experiment document")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version)));
        }
        positive("field.b0", self.field.b0)?;

        let p = &self.potential;
        if !(p.eta.modulus.is_finite() && p.eta.arg.is_finite()) || p.eta.modulus == 0.0 {
            return Err(bad("potential.eta", "eta must be nonzero"));
        }
        if p.eta.modulus < 0.0 {
            return Err(bad("potential.eta.modulus", "must be positive; put the phase in arg"));
        }
        if !(p.eps >= 0.0 && p.eps.is_finite()) {
            return Err(bad("potential.eps", format!("must be finite and nonnegative, got {}", p.eps)));
        }
        if self.kind == Kind::Spec3d && p.longitudinal.is_none() {
            return Err(bad("potential.longitudinal", "spec3d needs a longitudinal profile"));
        }

        let t = &self.truncation;
        at_least("truncation.k", t.k, 1)?;
        at_least("truncation.levels", t.levels, 1)?;
        positive("truncation.x_max", t.x_max)?;
        at_least("truncation.n_par", t.n_par, 3)?;
        if t.n_par % 2 == 0 {
            return Err(bad("truncation.n_par", format!("must be odd, got {}", t.n_par)));
        }
        at_least("truncation.m_x", t.m_x, 1)?;
        at_least("truncation.quad_order", t.quad_order, 8)?;
        at_least("truncation.basis_order", t.basis_order, 8)?;
        if !(t.rel_cut > 0.0 && t.rel_cut < 1.0) {
            return Err(bad("truncation.rel_cut", format!("must lie in (0, 1), got {}", t.rel_cut)));
        }
        at_least("truncation.contour_samples", t.contour_samples, 8)?;

        let g = &self.geometry;
        positive("geometry.r", g.r)?;
        positive("geometry.r0", g.r0)?;
        if g.r >= g.r0 {
            return Err(bad("geometry.r", format!("must be below geometry.r0 = {}", g.r0)));
        }
        positive("geometry.delta", g.delta)?;
        if !(g.theta > 0.0 && g.theta < std::f64::consts::FRAC_PI_4) {
            return Err(bad("geometry.theta", format!("must lie in (0, π/4), got {}", g.theta)));
        }
        if !(g.nu > 0.0 && g.nu < 1.0) {
            return Err(bad("geometry.nu", format!("must lie in (0, 1), got {}", g.nu)));
        }
        if let Some(k) = g.kappa {
            positive("geometry.kappa", k)?;
        }
        at_least("geometry.per_decade", g.per_decade, 1)?;
        at_least("geometry.bands", g.bands, 1)?;
        at_least("geometry.samples", g.samples, 1)?;

        let d = &self.detcheck;
        at_least("detcheck.dim", d.dim, 1)?;
        at_least("detcheck.max_order", d.max_order, 1)?;
        if let Some(RegimeSpec::H1 { m }) = self.toeplitz.regime {
            positive("toeplitz.regime.m", m)?;
        }
        if let Some(RegimeSpec::H2 { beta, decay }) = self.toeplitz.regime {
            positive("toeplitz.regime.beta", beta)?;
            positive("toeplitz.regime.decay", decay)?;
        }
        Ok(())
    }

    pub fn model2d_options(&self) -> Model2DOptions {
        let t = &self.truncation;
        Model2DOptions {
            k_count: t.k,
            levels: t.levels,
            quad_order: t.quad_order,
            basis_order: t.basis_order,
            rel_cut: t.rel_cut,
            leading_order: false,
        }
    }

    pub fn model3d_options(&self) -> Model3DOptions {
        let t = &self.truncation;
        Model3DOptions {
            k_count: t.k,
            levels: t.levels,
            quad_order: t.quad_order,
            basis_order: t.basis_order,
            x_max: t.x_max,
            n_par: t.n_par,
            m_x: t.m_x,
            rel_cut: t.rel_cut,
            leading_order: false,
            kappa: self.geometry.kappa,
        }
    }

    pub fn detcheck_options(&self) -> DetCheckOptions {
        let d = &self.detcheck;
        DetCheckOptions { seed: self.seed, cases: d.cases, dim: d.dim, families: d.families, max_order: d.max_order }
    }

    pub fn matrix_potential(&self) -> anyhow::Result<MatrixPotential> {
        let p = &self.potential;
        let longitudinal = if self.kind == Kind::Spec3d { p.longitudinal.clone() } else { None };
        MatrixPotential::new(p.eta.value(), p.eps, p.shape.clone(), longitudinal).context("potential")
    }
}

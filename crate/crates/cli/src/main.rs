use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use paulispec::{PotentialShape, Profile};
use paulispec_cli::config::{ExperimentConfig, Kind};
use paulispec_cli::{convergence_probe, run, ProbeParam, Report};

#[derive(Parser)]
#[command(name = "paulispec", version, about = "Eigenvalues of perturbed Pauli operators near the bottom of the spectrum")]
struct Cli {
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Admissible field: gap constant and Poisson round trip.
    Field(ExperimentArgs),
    /// Toeplitz operator on the zero modes: spectrum and counting function.
    Toeplitz(ExperimentArgs),
    /// 2D eigenvalues near 0: localization, counting against the Toeplitz trace.
    Spec2d(ExperimentArgs),
    /// 3D characteristic values near 0: sector-free region, accumulation ray.
    Spec3d(ExperimentArgs),
    /// Randomized checks of the determinant and index engine.
    Detcheck(ExperimentArgs),
    /// Rerun a config with one truncation parameter doubled and report the drift.
    Probe {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// K, L, R, N_par, quad_order or contour_samples.
        #[arg(long)]
        param: ProbeParam,
        /// Experiment kind when no config file is given.
        #[arg(long, value_enum, default_value = "spec2d")]
        kind: Kind,
    },
}

#[derive(Args, Default)]
struct ExperimentArgs {
    /// JSON experiment config; the kind's preset when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "PAULISPEC_OUT")]
    out: Option<PathBuf>,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    b0: Option<f64>,
    /// Field perturbation potential, e.g. "gaussian(0.1, 1)".
    #[arg(long)]
    phi_tilde: Option<Profile>,
    /// Diagonal potential entries; both replace the shape.
    #[arg(long, requires = "w2")]
    w1: Option<Profile>,
    #[arg(long, requires = "w1")]
    w2: Option<Profile>,
    #[arg(long)]
    longitudinal: Option<Profile>,
    #[arg(long)]
    eta_modulus: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eta_arg: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    x_max: Option<f64>,
    #[arg(long)]
    n_par: Option<usize>,
    #[arg(long)]
    m_x: Option<usize>,
    #[arg(long)]
    quad_order: Option<usize>,
    #[arg(long)]
    basis_order: Option<usize>,
    #[arg(long)]
    rel_cut: Option<f64>,
    #[arg(long)]
    contour_samples: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    per_decade: Option<usize>,
    #[arg(long)]
    bands: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Toeplitz symbol, e.g. "bracket(1, 4)".
    #[arg(long)]
    symbol: Option<Profile>,
    #[arg(long)]
    cases: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    families: Option<usize>,
}

macro_rules! set {
    ($args:ident, $($flag:ident => $target:expr),* $(,)?) => {
        $(if let Some(v) = $args.$flag.clone() { $target = v; })*
    };
}

impl ExperimentArgs {
    fn config(&self, kind: Kind, from_subcommand: bool) -> anyhow::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let c = ExperimentConfig::load(path)?;
                if from_subcommand && c.kind != kind {
                    anyhow::bail!("kind: config is a {} experiment, not {}", c.kind.name(), kind.name());
                }
                c
            }
            None => ExperimentConfig::preset(kind),
        };
        set!(self,
            seed => c.seed,
            b0 => c.field.b0,
            phi_tilde => c.field.phi_tilde,
            eta_modulus => c.potential.eta.modulus,
            eta_arg => c.potential.eta.arg,
            eps => c.potential.eps,
            k => c.truncation.k,
            levels => c.truncation.levels,
            x_max => c.truncation.x_max,
            n_par => c.truncation.n_par,
            m_x => c.truncation.m_x,
            quad_order => c.truncation.quad_order,
            basis_order => c.truncation.basis_order,
            rel_cut => c.truncation.rel_cut,
            contour_samples => c.truncation.contour_samples,
            r => c.geometry.r,
            r0 => c.geometry.r0,
            delta => c.geometry.delta,
            theta => c.geometry.theta,
            nu => c.geometry.nu,
            per_decade => c.geometry.per_decade,
            bands => c.geometry.bands,
            samples => c.geometry.samples,
            symbol => c.toeplitz.symbol,
            cases => c.detcheck.cases,
            dim => c.detcheck.dim,
            families => c.detcheck.families,
        );
        if let (Some(w1), Some(w2)) = (&self.w1, &self.w2) {
            c.potential.shape = PotentialShape::diagonal(w1.clone(), w2.clone());
        }
        if self.longitudinal.is_some() {
            c.potential.longitudinal = self.longitudinal.clone();
        }
        if self.kappa.is_some() {
            c.geometry.kappa = self.kappa;
        }
        c.validate()?;
        Ok(c)
    }
}

/// The flag or environment variable wins over the config's own directory.
fn output_dir(args: &ExperimentArgs, cfg: &ExperimentConfig) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("paulispec-out").join(cfg.kind.name()))
}

fn print_report(report: &Report, dir: &Path) {
    for c in &report.checks {
        let limit = c.limit.map(|l| format!(" (limit {l:.3e})")).unwrap_or_default();
        println!("{} {:<28} {:.6e}{limit}  {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.detail);
    }
    println!("report: {}", dir.join("report.json").display());
}

fn execute(cli: Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the worker pool")?;
    }
    let (args, kind, param) = match &cli.command {
        Command::Field(a) => (a, Kind::Field, None),
        Command::Toeplitz(a) => (a, Kind::Toeplitz, None),
        Command::Spec2d(a) => (a, Kind::Spec2d, None),
        Command::Spec3d(a) => (a, Kind::Spec3d, None),
        Command::Detcheck(a) => (a, Kind::Detcheck, None),
        Command::Probe { exp, param, kind } => (exp, *kind, Some(*param)),
    };
    let cfg = args.config(kind, param.is_none())?;
    if args.print_config {
        println!("{}", cfg.to_json());
        return Ok(true);
    }
    let dir = output_dir(args, &cfg);
    match param {
        None => {
            let report = run(&cfg, &dir)?;
            print_report(&report, &dir);
            Ok(report.pass)
        }
        Some(p) => {
            let rep = convergence_probe(&cfg, p, &dir)?;
            if !rep.used {
                println!("note: {} is not read by {} experiments", rep.parameter, cfg.kind.name());
            }
            for (k, d) in &rep.drift {
                println!("{} {k:<28} drift {d:.3e}", if *d > rep.limit { "FLAG" } else { "ok  " });
            }
            println!("max drift {:.3e} after doubling {}", rep.max_drift, rep.parameter);
            println!("report: {}", dir.join("probe.json").display());
            Ok(rep.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

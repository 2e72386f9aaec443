use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use paulispec_cli::ExperimentConfig;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_paulispec"));
    c.env_remove("PAULISPEC_OUT");
    c
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().args(args).arg("--out").arg(dir).output().expect("binary runs")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

const SMALL_3D: &[&str] = &["--k", "4", "--levels", "3", "--n-par", "129", "--m-x", "8", "--samples", "40", "--bands", "1"];

#[test]
fn field_preset_passes() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["field"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(tmp.path());
    assert_eq!(rep["schema"], "paulispec-report");
    assert_eq!(rep["schema_version"], 1);
    assert_eq!(rep["pass"], true);
    assert_eq!(rep["headline"]["zeta"], 2.0);
    assert_eq!(header(&tmp.path().join("field.csv")), "r,b,phi_tilde");
}

#[test]
fn toeplitz_table_matches_geometric_oracle() {
    let tmp = TempDir::new().unwrap();
    assert!(run_in(tmp.path(), &["toeplitz"]).status.success());
    let text = fs::read_to_string(tmp.path().join("eigenvalues.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,mu_k"));
    for line in lines.take(21) {
        let (k, mu) = line.split_once(',').unwrap();
        let k: i32 = k.parse().unwrap();
        let mu: f64 = mu.parse().unwrap();
        assert!((mu / (1.0f64 / 3.0).powi(k + 1) - 1.0).abs() < 1e-8, "k = {k}");
    }
    assert_eq!(header(&tmp.path().join("counting.csv")), "r,n_r,model_r");
    assert!(tmp.path().join("counting.svg").exists());
}

#[test]
fn spec2d_artifacts_are_byte_identical_across_runs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["spec2d", "--k", "16", "--r", "1e-6"];
    let oa = run_in(a.path(), &args);
    let ob = run_in(b.path(), &args);
    assert_eq!(oa.status.code(), ob.status.code());
    let rep = report(a.path());
    let names: Vec<String> = rep["artifacts"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert!(names.contains(&"eigenvalues.svg".to_string()));
    for name in names.iter().map(String::as_str).chain(["report.json"]) {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name} differs");
    }
    assert_eq!(header(&a.path().join("eigenvalues.csv")), "re_mu,im_mu,mult,abs_mu,arg_mu_over_eta,in_sector");
    let loc = rep["checks"].as_array().unwrap().iter().find(|c| c["name"] == "localization").unwrap();
    assert_eq!(loc["pass"], true);
}

#[test]
fn zero_eta_is_rejected_from_flags_and_files() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["spec2d", "--eta-modulus", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("potential.eta: eta must be nonzero"), "{err}");

    let mut cfg = ExperimentConfig::preset(paulispec_cli::Kind::Spec2d);
    cfg.potential.eta.modulus = 0.0;
    let path = tmp.path().join("bad.json");
    fs::write(&path, cfg.to_json()).unwrap();
    let out = run_in(tmp.path(), &["spec2d", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta must be nonzero"));
}

#[test]
fn printed_config_round_trips_through_a_file() {
    let tmp = TempDir::new().unwrap();
    let out = bin().args(["spec3d", "--print-config", "--eps", "0.02"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = ExperimentConfig::from_json(&text).unwrap();
    assert_eq!(cfg.potential.eps, 0.02);
    let path = tmp.path().join("cfg.json");
    fs::write(&path, &text).unwrap();
    let again = bin().args(["spec3d", "--print-config", "--config", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);

    let wrong = bin().args(["toeplitz", "--config", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(wrong.status.code(), Some(2));
}

#[test]
fn output_directory_from_environment() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("from-env");
    let out = bin().arg("detcheck").env("PAULISPEC_OUT", &dir).output().unwrap();
    assert!(out.status.success());
    assert!(dir.join("report.json").exists());
    assert_eq!(header(&dir.join("properties.csv")), "property,value");
}

#[test]
fn failing_check_sets_exit_status() {
    let tmp = TempDir::new().unwrap();
    // eight modes cannot resolve thresholds down to 1e-8
    let out = run_in(tmp.path(), &["toeplitz", "--k", "8"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(tmp.path())["pass"], false);
}

#[test]
fn probe_separates_converged_and_underresolved_parameters() {
    let tmp = TempDir::new().unwrap();
    let converged = tmp.path().join("quad");
    let out = bin().args(["probe", "--kind", "toeplitz", "--param", "quad_order", "--out"]).arg(&converged).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let rep: Value = serde_json::from_str(&fs::read_to_string(converged.join("probe.json")).unwrap()).unwrap();
    assert!(rep["max_drift"].as_f64().unwrap() < 1e-10);

    let coarse = tmp.path().join("k");
    let out = bin()
        .args(["probe", "--kind", "toeplitz", "--param", "K", "--k", "12", "--r", "1e-5", "--out"])
        .arg(&coarse)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let rep: Value = serde_json::from_str(&fs::read_to_string(coarse.join("probe.json")).unwrap()).unwrap();
    assert!(!rep["flagged"].as_array().unwrap().is_empty());
}

#[test]
fn spec3d_small_model_reports_the_ray() {
    let tmp = TempDir::new().unwrap();
    let mut args = vec!["spec3d"];
    args.extend_from_slice(SMALL_3D);
    let out = run_in(tmp.path(), &args);
    assert!(out.status.code().is_some_and(|c| c < 2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&tmp.path().join("zeros.csv")), "re_z,im_z,mult,in_E_sector,on_ray_angle_error");
    assert_eq!(header(&tmp.path().join("bands.csv")), "ell,r_l,r_l1,toeplitz_band_count,winding_count,winding_leading");
    let rep = report(tmp.path());
    let identity = rep["checks"].as_array().unwrap().iter().find(|c| c["name"] == "kk_star_identity").unwrap();
    assert_eq!(identity["pass"], true);
    assert!(fs::read_to_string(tmp.path().join("halfring.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn probe_of_longitudinal_grid_is_stable() {
    let tmp = TempDir::new().unwrap();
    let mut args = vec!["probe", "--kind", "spec3d", "--param", "N_par"];
    args.extend_from_slice(SMALL_3D);
    let out = run_in(tmp.path(), &args);
    let rep: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("probe.json")).unwrap())
        .unwrap_or_else(|_| panic!("{}", String::from_utf8_lossy(&out.stderr)));
    assert!(rep["max_drift"].as_f64().unwrap() < 1e-4, "{rep}");
}

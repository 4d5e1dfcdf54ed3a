use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn polariton(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polariton"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn check<'a>(report: &'a Value, id: &str) -> &'a Value {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["check_id"] == id)
        .unwrap_or_else(|| panic!("{id} missing"))
}

#[test]
fn smoke_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = polariton(&["verify-all"], &config("smoke.ini"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for f in ["chi.json", "green.json", "summary.json", "chi_trace.csv", "green_sweep.csv", "green_field.kernels"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    assert!(!dir.path().join("bath.json").exists());
    assert!(!dir.path().join("coupling.kernels").exists());
    let trace = std::fs::read_to_string(dir.path().join("chi_trace.csv")).unwrap();
    assert!(trace.starts_with("re_z,im_z,site_pair,i,j,re_chi,im_chi\n"));
    // 4K + 1 frequencies, one site, nine components
    assert_eq!(trace.lines().count(), 1 + 33 * 9);
    let chi = read_json(&dir.path().join("chi.json"));
    assert_eq!(chi["format_version"], 1);
    let kk = check(&chi, "chi.kramers_kronig");
    assert_eq!(kk["pass"], true);
    assert!(kk["paper_eq"].as_str().unwrap().starts_with('('));
    assert_eq!(kk["n_nodes"], 8);
}

#[test]
fn single_stage_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = polariton(&["model"], &config("local_lorentz.ini"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let model = read_json(&dir.path().join("model.json"));
    assert_eq!(check(&model, "model.structure_positive")["pass"], true);
    let bytes = std::fs::read(dir.path().join("coupling.kernels")).unwrap();
    let d = polariton::KernelDump::read_from(&mut bytes.as_slice()).unwrap();
    assert_eq!(d.n_per_axis, 1);
    assert_eq!(d.points.len(), d.kernels.len());
    assert!(d.points.iter().all(|z| z.im == 0.0 && z.re > 0.0));
}

#[test]
fn fields_stage_writes_coherent_evolution() {
    let dir = tempfile::tempdir().unwrap();
    let out = polariton(&["fields"], &config("local_lorentz.ini"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = std::fs::read_to_string(dir.path().join("field_evolution.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,field,site,component,value"));
    // E and B, 33 times, one site, three components
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2 * 33 * 3);
    let ex: Vec<f64> = rows
        .iter()
        .filter(|r| r[1] == "E" && r[3] == "0")
        .map(|r| r[4].parse().unwrap())
        .collect();
    assert_eq!(ex.len(), 33);
    assert!(ex[0].abs() > 1e-3);
    assert!(ex.iter().any(|x| x.signum() != ex[0].signum()));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = polariton(&["verify-all"], &config("smoke.ini"), d.path());
        assert_eq!(out.status.code(), Some(0));
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 4);
    for n in names {
        let x = std::fs::read(a.path().join(&n)).unwrap();
        let y = std::fs::read(b.path().join(&n)).unwrap();
        assert!(x == y, "{n:?} differs");
    }
}

#[test]
fn asymmetric_chi_flags_transpose_symmetry() {
    let dir = tempfile::tempdir().unwrap();
    let out = polariton(&["verify-all"], &config("violators/asymmetric_chi.ini"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    let chi = read_json(&dir.path().join("chi.json"));
    assert_eq!(check(&chi, "chi.transpose_symmetry")["pass"], false);
    assert_eq!(check(&chi, "chi.conjugation")["pass"], true);
    let green = read_json(&dir.path().join("green.json"));
    assert_eq!(check(&green, "green.reciprocity")["pass"], false);
    assert_eq!(check(&green, "green.defining")["pass"], true);
}

#[test]
fn scaled_h1_flags_canonical_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = polariton(&["bath"], &config("violators/scaled_h1.ini"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    let bath = read_json(&dir.path().join("bath.json"));
    let c = check(&bath, "bath.canonical");
    assert_eq!(c["pass"], false);
    // 1.1^2 - 1
    assert!((c["residual"].as_f64().unwrap() - 0.21).abs() < 1e-10);
    let summary = read_json(&dir.path().join("summary.json"));
    assert_eq!(summary["stages"][0]["failed"], serde_json::json!(["bath.canonical"]));
}

#[test]
fn decoupled_bath_reports_singular_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let out = polariton(&["bath"], &config("violators/decoupled_bath.ini"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    let bath = read_json(&dir.path().join("bath.json"));
    assert!(bath["errors"][0].as_str().unwrap().contains("not invertible"));
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = polariton(&["refine", "--levels", "1"], &config("smoke.ini"), dir.path());
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.ini");
    std::fs::write(&bad, "[grid]\nnodez = 8\n").unwrap();
    let out = polariton(&["verify-all"], &bad, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nodez"));

    let big = dir.path().join("big.ini");
    std::fs::write(&big, "[lattice]\nn = 3\n[grid]\nnodes = 64\n[limits]\nmax_dimension = 1000\n").unwrap();
    let out = polariton(&["verify-all"], &big, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("resource guard"));

    let out = polariton(&["verify-all"], &dir.path().join("missing.ini"), dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn refine_writes_convergence_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = polariton(&["refine", "--levels", "2"], &config("smoke.ini"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let rep = read_json(&dir.path().join("refine.json"));
    assert_eq!(rep["levels"].as_array().unwrap().len(), 2);
    assert_eq!(rep["levels"][1]["n_nodes"], 16);
    let csv = std::fs::read_to_string(dir.path().join("refine.csv")).unwrap();
    assert!(csv.starts_with("check_id,level,n_nodes,eta,residual"));
}

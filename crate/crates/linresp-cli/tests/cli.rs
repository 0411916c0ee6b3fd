use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], config: Option<&str>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_linresp"));
    cmd.args(args).arg("--out").arg(out);
    let dir = tempfile::tempdir().unwrap();
    if let Some(text) = config {
        let path = dir.path().join("run.toml");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn edcheck_default_config_passes() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["edcheck"], None, out.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.path().join("edcheck.json"));
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 4);
    assert!(checks.iter().all(|c| c["pass"] == true));
    let record = read_json(&out.path().join("run.json"));
    assert_eq!(record["command"], "edcheck");
    assert_eq!(record["artifacts"].as_array().unwrap().len(), 2);
}

#[test]
fn kmatrix_two_chirality_fixture() {
    let out = tempfile::tempdir().unwrap();
    let cfg = "velocities = [1.5, -1.5]\ncoupling = [[0.0, 3.0], [3.0, 0.0]]\nz = [1.0, 1.0]\na = 2.0\nq = [-1.0, 0.25, 4.0]\n";
    let o = run(&["kmatrix"], Some(cfg), out.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.path().join("kmatrix.csv")).unwrap();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let v: Vec<f64> = (2..6).map(|i| rec[i].parse().unwrap()).collect();
        assert!((v[0] - v[2]).abs() < 1e-12 && (v[1] - v[3]).abs() < 1e-12);
        n += 1;
    }
    assert_eq!(n, 6);
}

#[test]
fn empty_eta_list_is_config_invalid() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["kubo-scan"], Some("etas = []\n"), out.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ConfigInvalid"));
    assert_eq!(std::fs::read_dir(out.path()).unwrap().count(), 0);
}

#[test]
fn missing_model_file() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["spectrum"], Some("model = \"/nonexistent/chain.toml\"\n"), out.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ModelFileMissing"));
}

#[test]
fn failed_check_gives_exit_one() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["edcheck", "--tolerance-scale", "1e-30"], None, out.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("CheckFailed"));
    let record = read_json(&out.path().join("run.json"));
    assert!(record["checks"].as_array().unwrap().iter().any(|c| c["pass"] == false));
}

#[test]
fn identical_configs_give_identical_csv() {
    let cfg = "n = [4, 5, 6]\nspacing = 0.5\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(&["bubble"], Some(cfg), a.path()).status.success());
    assert!(run(&["bubble", "--jobs", "1"], Some(cfg), b.path()).status.success());
    assert_eq!(std::fs::read(a.path().join("bubble.csv")).unwrap(), std::fs::read(b.path().join("bubble.csv")).unwrap());
    assert_eq!(read_json(&a.path().join("run.json"))["config_hash"], read_json(&b.path().join("run.json"))["config_hash"]);
}

#[test]
fn spectrum_from_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("chain.toml");
    std::fs::write(&model, "[model]\nM = 1\nmu = 2.0\n[model.blocks]\n\"0\" = [[2.0, 0.0]]\n\"1\" = [[-1.0, 0.0]]\n").unwrap();
    let out = tempfile::tempdir().unwrap();
    let cfg = format!("model = {:?}\nl = 8\n", model.display().to_string());
    let o = run(&["spectrum"], Some(&cfg), out.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.path().join("spectrum.csv")).unwrap();
    assert_eq!(text.lines().count(), 9);
    assert!(text.starts_with("k,band,energy\n0.0,0,0.0"));
}

#[test]
fn chiral_triangle_cancels() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["chiralloop"], Some("n = [4, 5]\nspacing = 1.0\n"), out.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = read_json(&out.path().join("chiralloop_fit.json"));
    assert_eq!(fit["all_cancelled"], true);
}

#[test]
fn fermi_points_of_half_filled_chain() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["fermi"], None, out.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let f = read_json(&out.path().join("fermi.json"));
    assert_eq!(f["points"].as_array().unwrap().len(), 2);
}

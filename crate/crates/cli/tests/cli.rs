use std::path::Path;
use std::process::Command;

const CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/quick.toml");
const FREQUENCIES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/frequencies.toml");

fn revtori(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_revtori")).current_dir(dir).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn system_file_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(revtori(d, &["generate", CONFIG, "-o", "sys.toml"]).0, 0);

    let (code, out) = revtori(d, &["check", "sys.toml", "--report", "check.json"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("Context2"));
    assert_eq!(json(&d.join("check.json"))["passed"], true);

    let (code, out) = revtori(d, &["solve", "sys.toml", "--eps", "1e-3", "--modes", "6", "--tol", "1e-9", "-o", "t.toml", "--log", "s.json"]);
    assert_eq!(code, 0, "{out}");
    let log = json(&d.join("s.json"));
    assert_eq!(log["convergence"]["converged"], true);
    assert_eq!(log["fixed_points"]["Ok"]["found"], 4);

    let (code, out) = revtori(d, &["floquet", "t.toml", "sys.toml", "--report", "f.json"]);
    assert_eq!(code, 0, "{out}");
    assert_eq!(json(&d.join("f.json"))["verification"]["zero_count"], 1);

    assert_eq!(revtori(d, &["solve", "sys.toml", "--nu0", "1,2"]).0, 2);
    assert_eq!(revtori(d, &["check", "missing.toml"]).0, 2);
}

#[test]
fn diophantine_gate() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = revtori(dir.path(), &["diophantine", FREQUENCIES, "--report", "d.json"]);
    assert_eq!(code, 0);
    assert!(out.contains("J = [1] q = [-1]"));
    let rep = json(&dir.path().join("d.json"));
    assert_eq!(rep["report"]["passed"], true);
    assert!(!rep["near_resonances"].as_array().unwrap().is_empty());
    assert_eq!(revtori(dir.path(), &["diophantine", CONFIG, "--gamma", "1.0"]).0, 1);
}

#[test]
fn short_continuation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = std::fs::read_to_string(CONFIG).unwrap().replace("seed = 11", "seed = 11\neps_schedule = [0.0, 1e-3]");
    std::fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let (code, out) = revtori(dir.path(), &["continue", "c.toml", "-o", "c.csv"]);
    assert_eq!(code, 0, "{out}");
    let csv = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    // too few records for the fits
    let (code, out) = revtori(dir.path(), &["run", "c.toml", "-o", "run"]);
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("fits           FAIL"));
    assert_eq!(json(&dir.path().join("run/summary.json"))["passed"], false);
}

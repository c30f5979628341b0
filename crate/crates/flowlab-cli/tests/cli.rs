use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn flowlab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowlab"))
        .args(args)
        .env("FLOWLAB_OUT", out)
        .output()
        .expect("spawn flowlab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const FLAT: &str = r#"{
  "name": "flat",
  "flow": "CRF",
  "ansatz": { "preset": "flat-torus", "m": 3, "u0": [1.0, 2.0, 3.0] },
  "solver": { "t_max": 0.2, "dt_max": 0.05 },
  "analyses": { "classify": {} },
  "output_dir": "OUT"
}"#;

#[test]
fn bad_config_exits_2_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.json", &FLAT.replace(r#""dt_max": 0.05"#, r#""P_stop": -1.0, "bogus": 1"#));
    let o = flowlab(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("P_stop must be > 0"), "{err}");
    assert!(err.contains("unknown key `solver.bogus`"), "{err}");
}

#[test]
fn malformed_json_reports_position() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.json", "{\n  \"name\": \"x\",\n  oops\n}");
    let o = flowlab(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = flowlab(tmp.path(), &["verify", tmp.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn torus_h_verify_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = flowlab(tmp.path(), &["verify", scenario("torus-H.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    for name in ["verify/oracle", "verify/residuals", "verify/h_growth", "verify/doubling"] {
        assert!(out.contains(&format!("[pass] {name}")), "{out}");
    }
    assert!(tmp.path().join("runs/torus-H/checks.json").is_file());
}

#[test]
fn verify_without_checks_is_a_notice() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "flat.json", FLAT);
    let o = flowlab(tmp.path(), &["verify", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("no checks requested"), "{}", stdout(&o));
}

#[test]
fn coarse_refinement_failure_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "coarse.json",
        r#"{
  "name": "coarse",
  "flow": "CRF",
  "ansatz": { "preset": "dumbbell-neckpinch", "n": 3, "nodes": 16, "beta": 0.9 },
  "solver": { "t_max": 0.001 },
  "analyses": { "verify": { "checks": ["refinement"], "refinement_dt": 1e-3, "refinement_times": [0.0, 0.001] } },
  "output_dir": "coarse"
}"#,
    );
    let o = flowlab(tmp.path(), &["verify", cfg.to_str().unwrap()]);
    let out = stdout(&o);
    match o.status.code() {
        Some(0) => assert!(out.contains("[pass] verify/refinement"), "{out}"),
        Some(1) => assert!(out.contains("failing checks: verify/refinement"), "{out}"),
        c => panic!("exit {c:?}: {out}{}", stderr(&o)),
    }
}

#[test]
fn run_then_reanalyze_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "flat.json", FLAT);
    let o = flowlab(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let dir = tmp.path().join("OUT");
    for f in ["config.json", "run.json", "series.csv", "verdict.json", "manifest.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let csv = fs::read_to_string(dir.join("series.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,sup_AC,volume,S_min,sup_H2,dt"));
    assert!(fs::read_dir(dir.join("snapshots")).unwrap().count() > 1);

    let o = flowlab(tmp.path(), &["entropy", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(dir.join("entropy.json").is_file());
    let o = flowlab(tmp.path(), &["blowup", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));

    // The normalized config must load again unchanged.
    let o = flowlab(tmp.path(), &["run", dir.join("config.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn reanalyzing_missing_dir_is_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = flowlab(tmp.path(), &["classify", tmp.path().join("none").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "flat.json", FLAT);
    let read_all = |dir: &Path| {
        let mut v: Vec<(String, Vec<u8>)> = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    v.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
                }
            }
        }
        v.sort();
        v
    };
    assert_eq!(flowlab(tmp.path(), &["run", cfg.to_str().unwrap()]).status.code(), Some(0));
    let first = read_all(&tmp.path().join("OUT"));
    assert_eq!(flowlab(tmp.path(), &["run", cfg.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(first, read_all(&tmp.path().join("OUT")));
}

#[test]
fn sweep_runs_each_config_into_its_own_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write(tmp.path(), "a.json", &FLAT.replace("OUT", "a"));
    let b = write(tmp.path(), "b.json", &FLAT.replace("OUT", "b").replace("[1.0, 2.0, 3.0]", "[2.0, 2.0, 2.0]"));
    let o = flowlab(tmp.path(), &["run", "--sweep", "--threads", "2", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(tmp.path().join("a/manifest.json").is_file());
    assert!(tmp.path().join("b/manifest.json").is_file());

    let o = flowlab(tmp.path(), &["run", "--sweep", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = flowlab(tmp.path(), &["run", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

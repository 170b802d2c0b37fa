use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_keepout"));
    c.env_remove("KEEPOUT_SEED");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn records(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter(|l| l.starts_with('{'))
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

const SMALL: &str = r#"{
    "name": "small",
    "model": {"kind": "gaussian", "mean": [2, 2], "cov": [[11.62, 0.59], [0.59, 3.75]]},
    "shape": {"kind": "box", "center": [0, 0], "half_width": 3},
    "query": {"tau": 1, "alpha": 0.02},
    "oracle": {"ns": 20000, "grid": 40}
}"#;

#[test]
fn alpha_out_of_range_is_a_parse_error() {
    let out = bin().args(["occupyset"]).arg(scenario("fig4a")).args(["--alpha", "2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha out of range"));
}

#[test]
fn malformed_documents_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{\n  \"name\": \"x\",\n  \"model\": \n}");
    let out = bin().arg("fsr").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
    let unknown = write(dir.path(), "unknown.json", &SMALL.replace("\"name\"", "\"nmae\""));
    assert_eq!(bin().arg("fsr").arg(&unknown).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(2));
    assert_eq!(bin().arg("fsr").arg(dir.path().join("missing.json")).output().unwrap().status.code(), Some(2));
}

#[test]
fn invalid_covariance_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "neg.json", &SMALL.replace("[[11.62, 0.59], [0.59, 3.75]]", "[[1, 2], [2, 1]]"));
    let out = bin().arg("fsr").arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn containment_failure_exits_with_four() {
    // a tolerance far above alpha leaves the outer halfspaces inside the level set
    let out = bin()
        .arg("oracle")
        .arg(scenario("fig4b"))
        .args(["--alg", "projection", "--tol", "0.2", "--ns", "20000", "--grid-size", "60"])
        .arg("--out-dir")
        .arg(tempfile::tempdir().unwrap().path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let recs = records(&out);
    assert_eq!(recs.last().unwrap()["result"]["verdicts"][0]["report"]["pass"], Value::Bool(false));
}

#[test]
fn records_carry_hash_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "small.json", SMALL);
    let out = bin().arg("occupyset").arg(&p).args(["--alg", "minkowski", "--ndes", "16"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let recs = records(&out);
    assert_eq!(recs.len(), 1);
    let r = &recs[0];
    assert_eq!(r["version"], Value::String(keepout::VERSION.into()));
    assert_eq!(r["scenario_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(r["result"]["outer"]["set"]["a"].as_array().unwrap().len(), 16);
    assert!(r["timing_ms"].is_number());
}

#[test]
fn occupancy_point_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "small.json", SMALL);
    let out = bin().arg("occupancy").arg(&p).args(["--at", "2,2"]).output().unwrap();
    let phi = records(&out)[0]["result"]["phi"].as_f64().unwrap();
    assert!(phi > 0.3 && phi < 1.0);
    let out = bin().arg("occupancy").arg(&p).args(["--grid", "-1:5:4,0:4:3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,phi"));
    assert_eq!(lines.count(), 12);
    let out = bin().arg("occupancy").arg(&p).args(["--grid", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "small.json", SMALL);
    let run = |seed: Option<&str>| {
        let mut c = bin();
        c.arg("oracle").arg(&p).arg("--out-dir").arg(dir.path());
        if let Some(s) = seed {
            c.env("KEEPOUT_SEED", s);
        }
        let out = c.output().unwrap();
        assert_eq!(out.status.code(), Some(0));
        records(&out).last().unwrap()["result"]["seed"].as_u64().unwrap()
    };
    assert_eq!(run(None), 1);
    assert_eq!(run(Some("17")), 17);
    let out = bin().arg("oracle").arg(&p).env("KEEPOUT_SEED", "x").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unicycle_model_flag_and_trivial_cover() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "small.json", SMALL);
    let out = bin()
        .arg("cover")
        .arg(&p)
        .args(["--model", "unicycle", "--transition", "M2", "--tau", "15", "--alpha", "0.01", "--alg", "minkowski"])
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = records(&out);
    let summary = recs.last().unwrap();
    assert_eq!(summary["command"], "cover-summary");
    assert_eq!(summary["result"]["pieces"], 9);
    assert_eq!(recs.len(), 10);
    assert!(std::fs::read_dir(dir.path()).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().ends_with(".svg")));

    // a chain that always goes straight has a single reachable mode sequence
    let one = r#"{
        "name": "one",
        "model": {"kind": "unicycle", "x0": [0, 0], "horizon": 10, "transition": [
            [0, 0, 1, 0, 0], [0, 0, 1, 0, 0], [0, 0, 1, 0, 0], [0, 0, 1, 0, 0], [0, 0, 1, 0, 0]]},
        "shape": {"kind": "ball", "center": [0, 0], "radius": 0.2},
        "query": {"tau": 10, "alpha": 0.05, "algorithms": ["minkowski"]},
        "oracle": {"ns": 5000, "grid": 50}
    }"#;
    let p = write(dir.path(), "one.json", one);
    let out = bin().arg("compare").arg(&p).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8_lossy(&out.stdout);
    assert!(line.starts_with("one | minkowski cover"), "{line}");
    assert!(line.contains("(1 pieces, 0 empty)") && line.trim_end().ends_with("PASS"), "{line}");
}

#[test]
fn fig1_ranks_through_the_cli() {
    let out = bin().arg("fsr").arg(scenario("fig1")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let ranks: Vec<u64> = records(&out).iter().map(|r| r["result"]["rank"].as_u64().unwrap()).collect();
    assert_eq!(ranks, [1, 1, 1, 2]);
}

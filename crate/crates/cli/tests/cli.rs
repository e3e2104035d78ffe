use std::path::{Path, PathBuf};
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_synclab");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> i32 {
    let status = Command::new(BIN).args(args).arg("--out").arg(out).output().expect("spawn synclab");
    status.status.code().unwrap_or(-1)
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn orbit_rows_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("henon_orbit.json");
    assert_eq!(run(&["orbit", "--config", cfg.to_str().unwrap()], tmp.path()), 0);
    let csv = read(&tmp.path().join("orbit.csv"));
    assert_eq!(csv.lines().count(), 1002);
    assert!(csv.starts_with("n,x0,x1\n"));
    assert!(read(&tmp.path().join("orbit.svg")).contains("<polyline"));
    let manifest: serde_json::Value = serde_json::from_str(&read(&tmp.path().join("manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "orbit");
    assert_eq!(manifest["diverged"], false);
}

#[test]
fn lorenz_integration_row_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("lorenz_integrate.json");
    assert_eq!(run(&["integrate", "--config", cfg.to_str().unwrap()], tmp.path()), 0);
    // header plus t = 0, 0.001, ..., 10
    assert_eq!(read(&tmp.path().join("trajectory.csv")).lines().count(), 10_002);
}

#[test]
fn divergence_exits_3_with_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"system": {"system": "henon"}, "x0": [5.0, 5.0], "n": 100}"#);
    let out = tmp.path().join("o");
    assert_eq!(run(&["orbit", "--config", cfg.to_str().unwrap()], &out), 3);
    let rows = read(&out.join("orbit.csv")).lines().count();
    assert!(rows > 2 && rows < 102);
    assert!(read(&out.join("manifest.json")).contains("\"diverged\": true"));
}

#[test]
fn bad_input_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write(tmp.path(), "u.json", r#"{"system": {"system": "henon"}, "x0": [0, 0], "n": 3, "extra": 1}"#);
    let wrong_dim = write(tmp.path(), "d.json", r#"{"system": {"system": "lorenz"}, "x0": [0, 0], "t_end": 1.0}"#);
    let not_json = write(tmp.path(), "n.json", "{");
    let out = tmp.path().join("o");
    assert_eq!(run(&["orbit", "--config", unknown.to_str().unwrap()], &out), 2);
    assert_eq!(run(&["integrate", "--config", wrong_dim.to_str().unwrap()], &out), 2);
    assert_eq!(run(&["orbit", "--config", not_json.to_str().unwrap()], &out), 2);
    assert_eq!(run(&["orbit", "--config", tmp.path().join("missing.json").to_str().unwrap()], &out), 2);
    assert_eq!(run(&["sync-test"], &out), 2);
}

#[test]
fn henon_sync_test_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("henon_absolute_sync.json");
    assert_eq!(run(&["sync-test", "--config", cfg.to_str().unwrap()], tmp.path()), 0);
    let v: serde_json::Value = serde_json::from_str(&read(&tmp.path().join("sync.json"))).unwrap();
    assert_eq!(v["verdict"], "synchronizing");
    let mut rdr = csv::Reader::from_path(tmp.path().join("sync.csv")).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if rec[3].parse::<usize>().unwrap() > 0 {
            assert_eq!(rec[4].parse::<f64>().unwrap(), 0.0);
        }
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("henon_absolute_sync.json");
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_eq!(run(&["sync-test", "--config", cfg.to_str().unwrap(), "--seed", "5"], &a), 0);
    assert_eq!(run(&["sync-test", "--config", cfg.to_str().unwrap(), "--seed", "5", "--threads", "1"], &b), 0);
    assert_eq!(run(&["sync-test", "--config", cfg.to_str().unwrap(), "--seed", "6"], &c), 0);
    assert_eq!(read(&a.join("sync.csv")), read(&b.join("sync.csv")));
    assert_ne!(read(&a.join("sync.csv")), read(&c.join("sync.csv")));
    assert!(read(&a.join("manifest.json")).contains("\"seed\": 5"));
}

#[test]
fn plot_command_and_missing_column() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = write(tmp.path(), "d.csv", "n,distance,pair\n0,1.0,0\n1,0.5,0\n0,2.0,1\n1,0.1,1\n");
    let args = ["plot", "--csv", csv.to_str().unwrap(), "--x", "n", "--y", "distance", "--group", "pair", "--log-y"];
    assert_eq!(run(&args, tmp.path()), 0);
    let svg = read(&tmp.path().join("d.svg"));
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert_eq!(run(&["plot", "--csv", csv.to_str().unwrap(), "--x", "n", "--y", "nope"], tmp.path()), 2);
    let empty = write(tmp.path(), "e.csv", "n,distance\n");
    assert_eq!(run(&["plot", "--csv", empty.to_str().unwrap(), "--x", "n", "--y", "distance"], tmp.path()), 2);
}

#[test]
fn manifest_of_another_command_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("henon_orbit.json");
    let a = tmp.path().join("a");
    assert_eq!(run(&["orbit", "--config", cfg.to_str().unwrap()], &a), 0);
    let m = a.join("manifest.json");
    assert_eq!(run(&["certify", "--config", m.to_str().unwrap()], &tmp.path().join("b")), 2);
}

#[test]
fn linsync_reports_block_radius() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "l.json", r#"{"matrix": [[2.0, 0.0], [1.0, 0.5]], "kind": "map"}"#);
    assert_eq!(run(&["linsync", "--config", cfg.to_str().unwrap()], tmp.path()), 0);
    let v: serde_json::Value = serde_json::from_str(&read(&tmp.path().join("linsync.json"))).unwrap();
    assert_eq!(v["report"]["synchronizable"], true);
    assert!((v["report"]["criterion_value"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn polar_orbit_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "p.json", r#"{"system": {"system": "polar"}, "x0": [1.5, 0.0], "n": 100}"#);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&["orbit", "--config", cfg.to_str().unwrap()], &a), 0);
    assert_eq!(run(&["orbit", "--config", cfg.to_str().unwrap()], &b), 0);
    let csv = read(&a.join("orbit.csv"));
    assert_eq!(csv.lines().count(), 102);
    assert_eq!(csv, read(&b.join("orbit.csv")));
}

#[test]
fn certify_and_annulus_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let cert = configs().join("polar_certify.json");
    assert_eq!(run(&["certify", "--config", cert.to_str().unwrap()], tmp.path()), 0);
    let v: serde_json::Value = serde_json::from_str(&read(&tmp.path().join("certify.json"))).unwrap();
    assert_eq!(v[0]["verdict"], "non_synchronizing_for_structure");
    assert!(read(&tmp.path().join("section.csv")).starts_with("t,psi,psi_minus_t\n"));

    let ann = configs().join("polar_annulus.json");
    assert_eq!(run(&["annulus", "--config", ann.to_str().unwrap()], tmp.path()), 0);
    let v: serde_json::Value = serde_json::from_str(&read(&tmp.path().join("annulus.json"))).unwrap();
    assert_eq!(v["reports"][1]["type_q"], true);
    assert_eq!(v["reports"][0]["type_p"], true);
    assert_eq!(v["condition_r"], false);
    assert!(read(&tmp.path().join("annulus.svg")).contains("<polyline"));
}

//! The `lamforge` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lamforge::pamap::PiecewiseAffineMap;

fn lamforge(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lamforge"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("LAMFORGE_SEED")
        .output()
        .unwrap()
}

fn csv_rows_carry_hash(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("config_hash,"));
    let mut hash = None;
    for l in lines {
        let h = l.split(',').next().unwrap().to_string();
        assert_eq!(h.len(), 16);
        assert_eq!(*hash.get_or_insert(h.clone()), h);
    }
    hash.unwrap()
}

#[test]
fn laminate_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = lamforge(&["laminate", "--dim", "3", "--rate", "3", "--depth", "6"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["laminate.json", "diagnostics.csv", "plot.gp", "report.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "config_hash,dim,p,rate,depth,barycenter_err,moment_p,tightness_ratio,bad_mass,minors_gap"
    );
    assert_eq!(csv.lines().count(), 7);
    csv_rows_carry_hash(&dir.path().join("diagnostics.csv"));
    let nu = lamforge::DiscreteLaminate::from_json(&fs::read_to_string(dir.path().join("laminate.json")).unwrap()).unwrap();
    assert_eq!(nu.bad_mass(), lamforge::Dyadic::pow2_inv(6));
}

#[test]
fn solve_keeps_boundary_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["solve", "--dim", "2", "--n", "32", "--p", "1.5", "--J", "2", "--g", "id", "--iters", "2"];
    assert_eq!(lamforge(&args, a.path()).status.code(), Some(0));
    assert_eq!(lamforge(&args, b.path()).status.code(), Some(0));
    for f in ["diagnostics.csv", "gradients.csv", "map.json", "report.json", "plot.gp"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let h1 = csv_rows_carry_hash(&a.path().join("diagnostics.csv"));
    let h2 = csv_rows_carry_hash(&a.path().join("gradients.csv"));
    assert_eq!(h1, h2);

    let map = PiecewiseAffineMap::from_json(&fs::read_to_string(a.path().join("map.json")).unwrap()).unwrap();
    let id = PiecewiseAffineMap::identity(map.grid.clone());
    for v in 0..map.grid.vertex_count() {
        if map.grid.is_boundary_vertex(v) {
            assert_eq!(map.value(v), id.value(v));
        }
    }
}

#[test]
fn seed_environment_overrides_flag() {
    let run = |seed: &str, env: Option<&str>| {
        let dir = tempfile::tempdir().unwrap();
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_lamforge"));
        cmd.args(["decay", "--n", "8", "--iters", "1", "--depth", "3", "--seed", seed, "--out"]).arg(dir.path());
        cmd.env_remove("LAMFORGE_SEED");
        if let Some(e) = env {
            cmd.env("LAMFORGE_SEED", e);
        }
        assert_eq!(cmd.output().unwrap().status.code(), Some(0));
        fs::read(dir.path().join("laminates.csv")).unwrap()
    };
    assert_eq!(run("1", Some("5")), run("5", None));
    assert_ne!(run("1", None), run("5", None));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"n": 16, "iterations": 1, "constraint": {"kind": "exact", "rate": 0.5}}"#).unwrap();
    let out = dir.path().join("gap");
    let o = lamforge(&["gap", "--config", cfg.to_str().unwrap(), "--n", "8"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rate"], 0.5);
    let cfg_out: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg_out["n"], 8);

    fs::write(&cfg, r#"{"n": 16, "bogus": 1}"#).unwrap();
    assert_eq!(lamforge(&["solve", "--config", cfg.to_str().unwrap()], &out).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = lamforge(&["solve", "--p", "2.5", "--dim", "2"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("p < d"));
    assert_eq!(lamforge(&["solve", "--dim", "2", "--p", "2"], dir.path()).status.code(), Some(2));
    assert_eq!(lamforge(&["laminate", "--dim", "9"], dir.path()).status.code(), Some(2));
    assert_eq!(lamforge(&["solve", "--frobnicate"], dir.path()).status.code(), Some(2));

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = lamforge(&["laminate", "--depth", "2"], &blocker.join("sub"));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

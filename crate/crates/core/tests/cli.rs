use std::path::Path;
use std::process::Command;

use serde_json::Value;
use sha2::{Digest, Sha256};

const SMALL: &str = r#"seed = 7

[problem]
modes = 4
steps = 8
horizon = 1.0
terminal = { kind = "mode_soft_abs", mode = 1, weight = 1.0, center = 0.0, width = 0.5 }

[hamiltonian]
q = 2.0

[solver]
paths = 2000
"#;

fn hjb(args: &[&str], dir: &Path, seed: Option<&str>) -> i32 {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hjb-wave"));
    cmd.args(args).current_dir(dir).env_remove("HJB_SEED");
    if let Some(s) = seed {
        cmd.env("HJB_SEED", s);
    }
    cmd.output().expect("binary runs").status.code().expect("exit code")
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.toml"), config).unwrap();
    dir
}

fn manifest(out: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap()
}

fn sha(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    for bad in [
        SMALL.replace("horizon = 1.0", "horizon = -1.0"),
        SMALL.replace("paths = 2000", "paths = 2000\nunknown_key = 3"),
        SMALL.replace("modes = 4", "modes = 0"),
        "not toml at all [".to_string(),
    ] {
        let dir = setup(&bad);
        assert_eq!(hjb(&["simulate", "-c", "config.toml", "-o", "out"], dir.path(), None), 2, "{bad}");
        assert!(!dir.path().join("out").exists());
    }
}

#[test]
fn missing_config_and_bad_seed_exit_2() {
    let dir = setup(SMALL);
    assert_eq!(hjb(&["simulate", "-c", "absent.toml", "-o", "out"], dir.path(), None), 2);
    assert_eq!(hjb(&["simulate", "-c", "config.toml", "-o", "out"], dir.path(), Some("twelve")), 2);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn manifest_hashes_config_and_files() {
    let dir = setup(SMALL);
    assert_eq!(hjb(&["simulate", "-c", "config.toml", "-o", "out"], dir.path(), None), 0);
    let out = dir.path().join("out");
    let m = manifest(&out);
    assert_eq!(m["subcommand"], "simulate");
    assert_eq!(m["config_sha256"].as_str().unwrap(), sha(SMALL.as_bytes()));
    assert_eq!(m["seed"], 7);
    assert_eq!(m["seed_from_env"], false);
    assert_eq!(m["assertions_passed"], true);
    let files = m["files"].as_array().unwrap();
    assert!(!files.is_empty());
    for f in files {
        let bytes = std::fs::read(out.join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), sha(&bytes));
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
    }
}

#[test]
fn seed_override_from_environment() {
    let dir = setup(SMALL);
    assert_eq!(hjb(&["solve-bsde", "-c", "config.toml", "-o", "a"], dir.path(), None), 0);
    assert_eq!(hjb(&["solve-bsde", "-c", "config.toml", "-o", "b"], dir.path(), Some("99")), 0);
    assert_eq!(hjb(&["solve-bsde", "-c", "config.toml", "-o", "c"], dir.path(), Some("99")), 0);
    let (a, b, c) = (manifest(&dir.path().join("a")), manifest(&dir.path().join("b")), manifest(&dir.path().join("c")));
    assert_eq!(b["seed"], 99);
    assert_eq!(b["seed_from_env"], true);
    assert_eq!(a["config_sha256"], b["config_sha256"]);
    assert_ne!(a["files"], b["files"]);
    assert_eq!(b["files"], c["files"]);
}

#[test]
fn failed_assertion_exits_1_with_artifacts() {
    // The small-time prefactor check cannot hold when the sweep starts at 0.5.
    let config = format!("{SMALL}\n[smoothing]\nsigma_min = 0.5\nsigma_max = 2.0\npoints = 5\n");
    let dir = setup(&config);
    assert_eq!(hjb(&["audit-smoothing", "-c", "config.toml", "-o", "out"], dir.path(), None), 1);
    let m = manifest(&dir.path().join("out"));
    assert_eq!(m["assertions_passed"], false);
    assert!(dir.path().join("out/smoothing.csv").exists());
}

#[test]
fn unknown_subcommand_is_rejected() {
    let dir = setup(SMALL);
    assert_ne!(hjb(&["integrate", "-c", "config.toml", "-o", "out"], dir.path(), None), 0);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = setup(SMALL);
    for out in ["a", "b"] {
        assert_eq!(hjb(&["synthesize", "-c", "config.toml", "-o", out], dir.path(), None), 0);
    }
    let read = |name: &str| {
        let mut files: Vec<_> = std::fs::read_dir(dir.path().join(name))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    assert_eq!(read("a"), read("b"));
}

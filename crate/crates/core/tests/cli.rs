mod common;

use std::path::Path;
use std::process::{Command, Output};

fn romkit(args: &[&str], cache: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_romkit"));
    c.args(args).env_remove("ROMKIT_CACHE").env("RUST_LOG", "warn");
    if let Some(p) = cache {
        c.env("ROMKIT_CACHE", p);
    }
    c.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn stages_then_solve_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("run");
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, common::tiny(&root).to_toml()).unwrap();
    let cfg = cfg_path.to_str().unwrap();

    for stage in ["generate", "lift", "pod", "project", "train-rbf"] {
        let o = romkit(&["--config", cfg, stage], None);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("done"), "{stage}");
    }
    let o = romkit(&["--config", cfg, "pod"], None);
    assert!(stdout(&o).contains("pod: cached"));

    let out = dir.path().join("solve");
    let o = romkit(&["--config", cfg, "solve", "--mu", "0.55", "0.65", "--T", "0.05", "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("5 steps"));
    let csv = std::fs::read_to_string(out.join("coefficients.csv")).unwrap();
    assert!(csv.starts_with("t,a0,"));
    assert_eq!(csv.lines().count(), 7);

    let out = dir.path().join("far");
    let o = romkit(&["--config", cfg, "solve", "--mu", "0.9", "0.65", "--T", "0.02", "--out", out.to_str().unwrap()], None);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("outside the training range"));

    // a different pod rank reuses snapshots and lifts
    let o = romkit(&["--config", cfg, "pod", "--rank", "2"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(root.join("manifest.txt").exists());
}

#[test]
fn cache_variable_overrides_the_configured_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, common::tiny(&dir.path().join("ignored")).to_toml()).unwrap();
    let cache = dir.path().join("cache");
    let params = dir.path().join("mu.txt");
    std::fs::write(&params, "# two points\n0.5, 0.6\n0.6 0.7\n").unwrap();
    let o = romkit(&["--config", cfg_path.to_str().unwrap(), "generate", "--param-file", params.to_str().unwrap()], Some(&cache));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(cache.join("snapshots/mu_1/t_1/U.romf").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "nonsense = 3\n").unwrap();
    let o = romkit(&["--config", bad.to_str().unwrap(), "lift"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let o = romkit(&["--config", dir.path().join("absent.toml").to_str().unwrap(), "lift"], None);
    assert_eq!(o.status.code(), Some(2));

    let params = dir.path().join("mu.txt");
    std::fs::write(&params, "0.5 abc\n").unwrap();
    let o = romkit(&["generate", "--param-file", params.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));

    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, common::tiny(&dir.path().join("empty")).to_toml()).unwrap();
    let out = dir.path().join("o");
    let o = romkit(&["--config", cfg_path.to_str().unwrap(), "solve", "--mu", "0.5", "0.6", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lifts.rombin"));

    let o = romkit(&["--config", cfg_path.to_str().unwrap(), "project"], None);
    assert_eq!(o.status.code(), Some(3));

    let o = romkit(&["pod", "--rank", "2", "--threshold", "0.9"], None);
    assert_eq!(o.status.code(), Some(2));
}

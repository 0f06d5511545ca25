use std::path::Path;
use std::process::Command;

use chemoflow::config::{FluidInit, SimConfig};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chemoflow"));
    c.env("RUST_LOG", "warn");
    c
}

fn small() -> SimConfig {
    let mut c = SimConfig::reference();
    c.grid.dims = vec![8, 8, 8];
    c.time.dt = 2e-3;
    c.time.t_end = 0.06;
    // every step stored: coarser spacing leaves a quadrature defect above tol_super
    c.time.snapshot_interval = 2e-3;
    c.certify.test_functions = 4;
    c
}

fn write_config(dir: &Path, cfg: &SimConfig) -> std::path::PathBuf {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, cfg.emit()).unwrap();
    p
}

fn run(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn run_writes_artifacts_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let (code, _) = run(&["run", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]);
        assert_eq!(code, 0);
    }
    for f in ["config.toml", "ledger.csv", "windows.csv", "stats.csv", "certificate.txt"] {
        assert!(a.join(f).exists(), "missing {f}");
    }
    assert!(a.join("trajectory").is_dir());
    let la = std::fs::read(a.join("ledger.csv")).unwrap();
    assert_eq!(la, std::fs::read(b.join("ledger.csv")).unwrap());
    let cert = std::fs::read_to_string(a.join("certificate.txt")).unwrap();
    assert!(cert.starts_with("identity,label,residual,tolerance,status") || cert.contains("\nidentity,label"));
}

#[test]
fn certify_reads_a_stored_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small());
    let out = tmp.path().join("r");
    let (code, _) = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let traj = out.join("trajectory");
    let again = tmp.path().join("c");
    let (code, stdout) = run(&[
        "certify",
        "--config",
        cfg.to_str().unwrap(),
        "--trajectory",
        traj.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.lines().last().unwrap() == "overall,pass");
}

#[test]
fn malformed_config_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.toml");
    let text = small().emit().replace("[model]", "[model]\nbogus = 3");
    std::fs::write(&p, text).unwrap();
    assert_eq!(run(&["run", "--config", p.to_str().unwrap()]).0, 1);
    let mut cfg = small();
    cfg.model.m = 0.9;
    std::fs::write(&p, cfg.emit()).unwrap();
    assert_eq!(run(&["run", "--config", p.to_str().unwrap()]).0, 1);
    assert_eq!(run(&["frobnicate"]).0, 1);
}

#[test]
fn cfl_violation_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.time.dt = 1e-2;
    cfg.time.snapshot_interval = 1e-2;
    cfg.initial.u = FluidInit::Vortex { amplitude: 20.0 };
    let p = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("o");
    assert_eq!(run(&["run", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 3);
}

#[test]
fn invariant_violation_exits_with_two_and_dumps_state() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.tolerances.mass_drift = -1.0;
    let p = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("o");
    assert_eq!(run(&["run", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 2);
    let dump = std::fs::read_to_string(out.join("violation.txt")).unwrap();
    assert!(dump.contains("step 0"), "{dump}");
}

#[test]
fn help_exits_cleanly() {
    let (code, stdout) = run(&["--help"]);
    assert_eq!(code, 0);
    for sub in ["run", "sweep", "mms", "compare", "certify"] {
        assert!(stdout.contains(sub));
    }
}

use std::fs;
use std::path::Path;
use std::process::Command;

fn simulate(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_simulate")).args(args).output().unwrap()
}

const SWEEP: &str = r#"
seed = 4
n_samples = 3
p_grid = [0.0, 0.5, 1.0]

[sweep]
protocols = ["cz"]
modes = ["omega_only", "zeta_only"]
epsilons = [0.0, 0.001]
"#;

fn run_sweep(dir: &Path, threads: &str) {
    let cfg = dir.join("sweep.toml");
    fs::write(&cfg, SWEEP).unwrap();
    let out = dir.join(format!("out{threads}"));
    let o = simulate(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_writes_listed_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    run_sweep(dir.path(), "1");
    run_sweep(dir.path(), "2");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out1/manifest.json")).unwrap()).unwrap();
    let outputs: Vec<String> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert_eq!(outputs.len(), 3);
    let mut on_disk: Vec<String> = fs::read_dir(dir.path().join("out1"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let mut listed = outputs.clone();
    listed.sort();
    assert_eq!(on_disk, listed);
    for name in &outputs {
        let a = fs::read(dir.path().join("out1").join(name)).unwrap();
        let b = fs::read(dir.path().join("out2").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between thread counts");
    }
    let csv = fs::read_to_string(dir.path().join("out1/sweep_cz_omega_only.csv")).unwrap();
    assert!(csv.starts_with("epsilon,p,phi,fidelity,stderr,n_samples,protocol,seed\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
}

#[test]
fn grape_flags_select_a_single_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.toml");
    fs::write(&cfg, "n_samples = 2\np_grid = [0.0, 1.0]\n").unwrap();
    let out = dir.path().join("g");
    let o = simulate(&[
        "grape",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--problem",
        "cz",
        "--eta",
        "20",
        "--epsilon",
        "0.02",
        "--disorder-seed",
        "3",
        "--iters",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("grape_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(table.lines().nth(1).unwrap().starts_with("cz,20,"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("grape_cz_eta20_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["iterations"], 2);
    assert_eq!(summary["disorder"]["seed"], 3);
    assert!(out.join("grape_cz_eta20_controls.json").exists());
    assert!(out.join("grape_cz_eta20_trajectory.csv").exists());
}

#[test]
fn bad_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "n_samples = 0\n").unwrap();
    let o = simulate(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_samples"));
}

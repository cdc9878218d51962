use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dirtypaper-sim"))
        .args(args)
        .output()
        .expect("failed to launch dirtypaper-sim")
}

fn small_run(out: &Path, workers: &str) -> Output {
    sim(&[
        "--out",
        out.to_str().unwrap(),
        "--trials",
        "300",
        "--snr",
        "0:20:10",
        "--workers",
        workers,
    ])
}

#[test]
fn writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), "1");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scheme,snr_db,K,N,T,M,delta,trials,ber,ci95_ber,ser,mse,tx_power,seed"
    );
    assert_eq!(lines.count(), 2 * 2 * 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["trials_per_point"], 300);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("DPC") && stdout.contains("SOTA"));
}

#[test]
fn output_independent_of_workers() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(small_run(a.path(), "1").status.success());
    assert!(small_run(b.path(), "3").status.success());
    assert_eq!(
        fs::read(a.path().join("results.csv")).unwrap(),
        fs::read(b.path().join("results.csv")).unwrap()
    );
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    fs::write(&cfg, "# short run\nk = 2\nn = 4\nt_slots = 5\nsnr_grid_db = 10\ntrials_per_point = 50\nschemes = DPC\nmaster_seed = 9\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = sim(&["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..8], &["DPC", "10", "2", "4", "5", "4", "2", "50"]);
    assert_eq!(row[13], "9");
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn unknown_config_key_fails_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "k = 2\nantenas = 5\n").unwrap();
    let out = sim(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("antenas"));
    assert!(!dir.path().join("results.csv").exists());
}

#[test]
fn invalid_values_fail() {
    let dir = tempfile::tempdir().unwrap();
    for args in [["--snr", "a:b:c"], ["--schemes", "GABP"], ["--t-slots", "0"]] {
        let out = sim(&[args[0], args[1], "--trials", "10", "--out", dir.path().to_str().unwrap()]);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
}

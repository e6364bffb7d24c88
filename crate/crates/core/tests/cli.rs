use std::path::{Path, PathBuf};
use std::process::Command;

use vlc_jcp::cli::RunManifest;
use vlc_jcp::ScenarioConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vlcjcp"))
}

fn default_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/default.json")
}

fn code(cmd: &mut Command) -> i32 {
    cmd.output().unwrap().status.code().unwrap()
}

#[test]
fn validate_exit_codes() {
    assert_eq!(code(bin().arg("validate").arg(default_scenario())), 0);

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::default();
    cfg.modulation.order = 3;
    let bad = dir.path().join("m3.json");
    std::fs::write(&bad, cfg.to_json()).unwrap();
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("modulation.order"));

    assert_eq!(code(bin().arg("validate").arg(dir.path().join("missing.json"))), 2);
    assert_eq!(code(bin().arg("sweep").arg("nonsense").arg(default_scenario())), 2);
}

#[test]
fn rss_table_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        assert_eq!(code(bin().args(["rss-table"]).arg(default_scenario()).arg("--out").arg(p)), 0);
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1 + 61 * 61 * 4);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(code(bin().arg("rss-table").arg(default_scenario()).args(["--height", "300", "--out"]).arg(&a)), 1);
}

fn sweep(dir: &Path, extra: &[&str]) -> i32 {
    code(bin().arg("sweep").args(extra).arg(default_scenario()).arg("--out-dir").arg(dir))
}

#[test]
fn ber_sweep_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["ber", "--snr", "60..80:5", "--seed", "7", "--trials", "30"];
    assert_eq!(sweep(&a, &args), 0);
    assert_eq!(sweep(&b, &[&args[..], &["--threads", "2"]].concat()), 0);
    let ca = std::fs::read(a.join("ber_metrics.csv")).unwrap();
    assert_eq!(ca, std::fs::read(b.join("ber_metrics.csv")).unwrap());
    let text = String::from_utf8(ca).unwrap();
    assert!(text.starts_with("sweep_var,value,metric,mean,ci_half_width,trials,seed\n"));
    // ber and fer rows for five SNR points.
    assert_eq!(text.lines().count(), 1 + 10);
}

#[test]
fn pos2d_manifest_checksums() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sweep(dir.path(), &["pos2d", "--snr", "20,40", "--trials", "20"]), 0);
    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.seed, 0);
    assert_eq!(manifest.artifacts.len(), 3);
    for a in &manifest.artifacts {
        let bytes = std::fs::read(dir.path().join(&a.path)).unwrap();
        use sha2::Digest;
        let hex: String = sha2::Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, a.sha256, "{}", a.path);
    }
    let metrics = std::fs::read_to_string(dir.path().join("pos2d_metrics.csv")).unwrap();
    // One record per (SNR, position) for the four default positions.
    assert_eq!(metrics.lines().count(), 1 + 2 * 4);
}

#[test]
fn failed_sweep_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(sweep(&out, &["pos2d", "--positions", "400,0", "--trials", "2"]), 1);
    assert!(!out.exists() || std::fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn k_factor_command() {
    let out = bin()
        .arg("k-factor")
        .arg(default_scenario())
        .args(["--led", "0", "--pd", "0,0,0", "--segment", "20"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["segments"], 900);
    assert!(v["k_clamped"].as_f64().unwrap() >= 1e-3);
}

use sha2::{Digest, Sha256};
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spinmrfm"));
    for var in [
        "SPINMRFM_CONFIG",
        "SPINMRFM_PRESET",
        "SPINMRFM_KIND",
        "SPINMRFM_N_TRAJ",
        "SPINMRFM_SEED",
        "SPINMRFM_DT",
        "SPINMRFM_FOCK",
        "SPINMRFM_OUT",
        "SPINMRFM_WORKERS",
    ] {
        c.env_remove(var);
    }
    c.env("RUST_LOG", "warn");
    c
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by signal")
}

fn manifest(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn checksums(m: &serde_json::Value) -> Vec<(String, String)> {
    m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| {
            (
                o["path"].as_str().unwrap().to_string(),
                o["sha256"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

#[test]
fn preset_list_names_both_presets() {
    let o = bin().args(["preset", "list"]).output().unwrap();
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.lines().any(|l| l.starts_with("desk-small\t")));
    assert!(out.lines().any(|l| l.starts_with("paper-sec7\t")));
}

#[test]
fn preset_show_prints_resolution() {
    let o = bin()
        .args(["preset", "show", "paper-sec7"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["resolution"].is_object());
}

#[test]
fn validate_exit_codes() {
    let ok = bin()
        .args(["validate", "--kind", "qsd_ensemble"])
        .output()
        .unwrap();
    assert_eq!(code(&ok), 0);
    let d: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert!(d["errors"].as_array().unwrap().is_empty());

    // the large-scale preset cannot be represented in 32 levels
    let warn = bin()
        .args(["validate", "--kind", "qsd_ensemble", "--preset", "paper-sec7"])
        .output()
        .unwrap();
    assert_eq!(code(&warn), 3);
    let d: serde_json::Value = serde_json::from_slice(&warn.stdout).unwrap();
    assert!(d["truncation"]["advisory"].as_bool().unwrap());

    for args in [
        vec!["validate"],
        vec!["validate", "--kind", "bogus"],
        vec!["validate", "--kind", "master", "--preset", "nope"],
    ] {
        let o = bin().args(&args).output().unwrap();
        assert_eq!(code(&o), 1, "{args:?}");
    }
}

#[test]
fn run_from_environment_writes_checksummed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spectrum");
    let o = bin()
        .arg("run")
        .env("SPINMRFM_KIND", "noise_spectrum")
        .env("SPINMRFM_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    let sums = checksums(&m);
    assert_eq!(sums.len(), 1);
    for (path, sha) in sums {
        let bytes = std::fs::read(out.join(&path)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), sha, "{path}");
    }
    let header = std::fs::read_to_string(out.join("noise_spectrum.csv")).unwrap();
    assert!(header.starts_with("omega,shot,backaction,thermal,total,snr\n"));
}

#[test]
fn manifest_config_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "kind = \"qsd_ensemble\"\npreset = \"desk-small\"\nfock = 16\nt_end = 4.0\nn_traj = 3\nbase_seed = 99\n",
    )
    .unwrap();
    let first = dir.path().join("first");
    let o = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&first)
        .output()
        .unwrap();
    assert!(matches!(code(&o), 0 | 3), "{}", String::from_utf8_lossy(&o.stderr));
    let m1 = manifest(&first);
    assert_eq!(m1["seeds"].as_array().unwrap().len(), 3);

    let echo = toml::to_string(&m1["config"]).unwrap();
    let replay_cfg = dir.path().join("replay.toml");
    std::fs::write(&replay_cfg, echo).unwrap();
    let second = dir.path().join("second");
    let o = bin()
        .args(["run", "--workers", "2", "--config"])
        .arg(&replay_cfg)
        .arg("--out")
        .arg(&second)
        .output()
        .unwrap();
    assert!(matches!(code(&o), 0 | 3), "{}", String::from_utf8_lossy(&o.stderr));
    let m2 = manifest(&second);
    assert_eq!(checksums(&m1), checksums(&m2));
}

#[test]
fn unwritable_output_fails_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let o = bin()
        .args(["run", "--kind", "qsd_ensemble", "--out"])
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

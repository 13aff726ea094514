use std::path::Path;
use std::process::Command;

fn parity() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_parity"));
    cmd.env_remove("PARITY_SEED");
    cmd
}

fn config(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn train_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let status = parity()
            .args(["train", &config("k2.cfg"), "--seeds", "3", "--out"])
            .arg(out)
            .output()
            .unwrap()
            .status;
        assert!(status.success());
    }
    for file in ["report.json", "report.txt"] {
        assert_eq!(read(&a, file), read(&b, file), "{file}");
    }
    let json: serde_json::Value = serde_json::from_str(&read(&a, "report.json")).unwrap();
    assert_eq!(json["schema"], 1);
    assert_eq!(json["samples_per_seed"], 64 * 25);
    assert_eq!(json["seeds"].as_array().unwrap().len(), 3);
    assert!(json.get("wall_clock_seconds").is_none());
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let run = |env: Option<&str>, flag: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut cmd = parity();
        cmd.args(["train", &config("k2.cfg"), "--seeds", "1", "--out"]).arg(&out);
        if let Some(v) = env {
            cmd.env("PARITY_SEED", v);
        }
        if let Some(v) = flag {
            cmd.args(["--seed", v]);
        }
        assert!(cmd.output().unwrap().status.success());
        let json: serde_json::Value = serde_json::from_str(&read(&out, "report.json")).unwrap();
        json["spec"]["train"]["seed"].as_u64().unwrap()
    };
    assert_eq!(run(None, None, "default"), 0);
    assert_eq!(run(Some("17"), None, "env"), 17);
    assert_eq!(run(Some("17"), Some("5"), "flag"), 5);
}

#[test]
fn errors_and_strict_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "d = 8\nk = 2\nm = 12\neta = -1\n").unwrap();
    let out = parity().args(["train"]).arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta"));

    assert!(!parity().args(["train", "/nonexistent.cfg"]).output().unwrap().status.success());

    // Five steps are not enough for the approximation check to pass.
    let failing = dir.path().join("short.cfg");
    std::fs::write(&failing, "d = 8\nk = 2\nm = 12\nsteps = 1\nchecks = approximation\n").unwrap();
    assert!(parity().args(["train"]).arg(&failing).output().unwrap().status.success());
    let strict = parity().args(["train", "--strict"]).arg(&failing).output().unwrap();
    assert_eq!(strict.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&strict.stdout).contains("FAIL"));
}

#[test]
fn oracle_check_and_trace_commands() {
    let out = parity().args(["oracle-check", "--networks", "5"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 3, "{text}");

    let out = parity().args(["trace", &config("k2.cfg"), "--neuron", "good"]).output().unwrap();
    assert!(out.status.success());
    let csv = String::from_utf8_lossy(&out.stdout);
    assert!(csv.starts_with("# neuron="));
    assert!(csv.contains("class=good"));
    assert!(csv.contains("t,neuron,coord,value,kind"));

    let dir = tempfile::tempdir().unwrap();
    let status = parity()
        .args(["trace", &config("k2.cfg"), "--neuron", "3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(dir.path().join("neuron_3.csv").exists());
    assert!(!parity().args(["trace", &config("k2.cfg"), "--neuron", "99"]).output().unwrap().status.success());
}

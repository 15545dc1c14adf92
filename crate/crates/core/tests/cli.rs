use std::process::Command;

fn qbattery() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qbattery"))
}

#[test]
fn variance_csv_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"parameters": {"b": [0.45], "alpha": [0.0, 0.96]}}"#).unwrap();
    let out = dir.path().join("v.csv");
    let status = qbattery()
        .args(["variance", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# qbattery-csv v1 protocol=variance");
    assert_eq!(lines.len(), 4);
    let cols: Vec<&str> = lines[1].split(',').collect();
    let sn = cols.iter().position(|c| *c == "detected_sn").unwrap();
    assert_eq!(lines[2].split(',').nth(sn), Some("1"));
    assert_eq!(lines[3].split(',').nth(sn), Some("4"));
}

#[test]
fn tpm_json_on_stdout() {
    let out = qbattery()
        .args(["tpm", "--eps-a", "0.2", "--eps-b", "0.5", "--eps-b", "1", "--format", "json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2 * 51);
    assert_eq!(rows[0]["eps_a"], 0.2);
    assert_eq!(rows[1]["eps_b"], 1.0);
}

#[test]
fn histogram_writes_summary_next_to_bins() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.csv");
    let status = qbattery()
        .args(["histogram", "--seed", "3", "--n", "2000", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("h.csv.summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);
    assert_eq!(summary[0]["n_samples"], 2000);
}

#[test]
fn exit_codes() {
    // missing seed for a sampled run
    assert_eq!(qbattery().arg("histogram").status().unwrap().code(), Some(1));
    assert_eq!(qbattery().args(["variance", "--eps", "1.5"]).status().unwrap().code(), Some(1));
    assert_eq!(qbattery().arg("nonsense").status().unwrap().code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"verify": {"n": 2000, "n_se": 0.0, "instances": 5}}"#).unwrap();
    let out = qbattery()
        .args(["verify", "--seed", "1", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAILED"));
    let ok = qbattery().args(["verify", "--seed", "1", "--n", "3000"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn sweep_uses_the_configured_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"protocol": "coincidence", "state": {"isotropic": {}}, "parameters": {"alpha": [0.5], "eps": [0.7]}}"#,
    )
    .unwrap();
    let out = qbattery().args(["sweep", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# qbattery-csv v1 protocol=coincidence"));
}

use std::process::Command;

fn nie() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nie"))
}

#[test]
fn run_writes_csv_with_header() {
    let dir = std::env::temp_dir().join("nie-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("t.csv");
    let status = nie()
        .args([
            "run", "--preset", "na2_down", "--regime", "perturbative", "--scan", "y3", "--from",
            "-80", "--to", "80", "--points", "161",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("y3,"));
    assert_eq!(lines.count(), 161);
}

#[test]
fn presets_lists_five_names() {
    let output = nie().arg("presets").output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.contains("na2_down"));
}

#[test]
fn validation_errors_exit_1_and_name_the_key() {
    let output = nie()
        .args(["run", "--preset", "no_such_preset", "--out", "/dev/null"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let msg = String::from_utf8(output.stderr).unwrap();
    assert!(msg.contains("no_such_preset"));

    let output = nie()
        .args(["run", "--preset", "na2_down", "--regime", "bogus", "--out", "/dev/null"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let msg = String::from_utf8(output.stderr).unwrap();
    assert!(msg.contains("regime"));
}

#[test]
fn dumped_preset_reparses() {
    let output = nie().args(["presets", "na2_up"]).output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let preset = nie::scenarios::Preset::from_text(&text).unwrap();
    assert_eq!(preset.name, "na2_up");
}

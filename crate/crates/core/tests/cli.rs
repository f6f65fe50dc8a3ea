use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn niplab(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_niplab"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn summary_value(dir: &Path, key: &str) -> Option<String> {
    let text = fs::read_to_string(dir.join("summary.csv")).unwrap();
    text.lines().find_map(|l| l.strip_prefix(&format!("{key},")).map(str::to_string))
}

#[test]
fn passing_run_exits_zero_and_prints_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let res = niplab(&["omega"], &fixture("scenarios/omega_example_ii.cfg"), &out);
    assert_eq!(res.status.code(), Some(0));
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert_eq!(stdout, fs::read_to_string(out.join("manifest.txt")).unwrap());
    assert!(stdout.contains("  omega.txt\n"));
    assert_eq!(summary_value(&out, "verdict").as_deref(), Some("pass"));
}

#[test]
fn wrong_expected_mask_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("mismatch.cfg");
    let text = fs::read_to_string(fixture("scenarios/omega_example_i.cfg"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("omega."))
        .map(|l| format!("{l}\n"))
        .collect::<String>()
        + &format!("omega.expected = {}\n", fixture("omega/example_ii.txt").display());
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("run");
    let res = niplab(&["omega"], &cfg, &out);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(summary_value(&out, "matches_expected").as_deref(), Some("false"));
}

#[test]
fn unknown_key_and_missing_seed_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("unknown.cfg", "run.seed = 1\ninitial.field = const:1\ngrid.colour = red\n"),
        ("unseeded.cfg", "initial.field = const:1\n"),
    ] {
        let cfg = tmp.path().join(name);
        fs::write(&cfg, text).unwrap();
        let out = tmp.path().join(name.replace(".cfg", ""));
        let res = niplab(&["uniqueness"], &cfg, &out);
        assert_eq!(res.status.code(), Some(1), "{name}");
        assert!(!out.join("manifest.txt").exists());
    }
}

#[test]
fn seed_flag_overrides_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture("scenarios/omega_example_i.cfg");
    let plain = tmp.path().join("plain");
    let seeded = tmp.path().join("seeded");
    assert_eq!(niplab(&["omega"], &cfg, &plain).status.code(), Some(0));
    assert_eq!(niplab(&["omega", "--seed", "99"], &cfg, &seeded).status.code(), Some(0));
    assert_eq!(summary_value(&seeded, "seed").as_deref(), Some("99"));
    assert_ne!(summary_value(&plain, "digest"), summary_value(&seeded, "digest"));
}

#[test]
fn audit_without_samples_writes_only_the_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("empty.cfg");
    fs::write(&cfg, "run.seed = 4\ngrid.counts = 30\ninitial.field = const:1\naudit.samples = 0\n").unwrap();
    let out = tmp.path().join("run");
    let res = niplab(&["audit"], &cfg, &out);
    assert_eq!(res.status.code(), Some(0));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert_eq!(manifest.lines().count(), 1);
    assert!(manifest.ends_with("  summary.csv\n"));
}

#[test]
fn uniqueness_writes_discrepancy_and_script() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let res = niplab(&["uniqueness"], &fixture("scenarios/uniqueness_baseline_1d.cfg"), &out);
    assert_eq!(res.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("discrepancy.csv")).unwrap();
    assert!(csv.starts_with("time,discrepancy\n"));
    assert!(fs::read_to_string(out.join("plot.gp")).unwrap().contains("discrepancy.csv"));
    assert_eq!(summary_value(&out, "classification").as_deref(), Some("baseline"));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn influence(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_influence"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SIMULATED: &str = "reference_time = \"2024-06-01\"\nseed = 9\n[simulate]\nusers = 120\n";

#[test]
fn all_prints_manifest_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SIMULATED);
    let out = dir.path().join("o");
    let o = influence(&["all", "-c", &cfg, "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(Path::new(stdout.trim()), out.join("manifest.txt"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("evaluate:"));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed=9"));
}

#[test]
fn cli_overrides_take_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SIMULATED);
    let out = dir.path().join("o");
    let o = influence(&[
        "simulate",
        "-c",
        &cfg,
        "-o",
        out.to_str().unwrap(),
        "--seed",
        "77",
        "--reference-time",
        "2024-01-01T00:00:00Z",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed=77"));
    assert!(manifest.contains("1704067200"));
}

#[test]
fn config_problems_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(
        code(&influence(&["all", "-c", missing.to_str().unwrap()])),
        2
    );

    let bad = write_config(dir.path(), "reference_time = [\n");
    assert_eq!(code(&influence(&["all", "-c", &bad])), 2);

    let no_inputs = write_config(dir.path(), "reference_time = 1717200000\n");
    let o = influence(&[
        "ingest",
        "-c",
        &no_inputs,
        "-o",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);

    let cfg = write_config(dir.path(), SIMULATED);
    assert_eq!(
        code(&influence(&[
            "all",
            "-c",
            &cfg,
            "--reference-time",
            "yesterday"
        ])),
        2
    );
}

#[test]
fn stage_failures_exit_with_stage_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SIMULATED);
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    for (stage, want) in [("features", 4), ("train", 5), ("score", 6), ("evaluate", 7)] {
        let r = influence(&[stage, "-c", &cfg, "-o", o]);
        assert_eq!(code(&r), want, "{stage}");
        assert!(out.join("INCOMPLETE").is_file());
    }

    // unreadable (non UTF-8) input fails inside ingest
    fs::write(dir.path().join("events.txt"), [0xff, 0xfe, 0x00]).unwrap();
    let cfg = write_config(
        dir.path(),
        "reference_time = 1717200000\n[inputs]\nevents = [\"events.txt\"]\n",
    );
    assert_eq!(code(&influence(&["ingest", "-c", &cfg, "-o", o])), 3);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = influence(&["frobnicate"]);
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

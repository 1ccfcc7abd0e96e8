use std::fs;
use std::path::{Path, PathBuf};

use uqkit::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};

const COMMANDS: [&str; 9] = [
    "index", "synth", "extract", "train", "predict", "eval", "rank", "topk", "report",
];

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn capture(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut full = vec!["uqkit"];
    full.extend_from_slice(args);
    let code = run(&full, &mut out);
    (code, String::from_utf8(out).expect("utf-8 output"))
}

/// Compares against the stored file; `UQKIT_BLESS=1` rewrites it instead.
fn assert_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UQKIT_BLESS").is_some() {
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "help text for {name} changed");
}

#[test]
fn top_level_help_matches_golden() {
    let (code, out) = capture(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert_golden("uqkit.help", &out);
}

#[test]
fn every_command_help_matches_golden() {
    for cmd in COMMANDS {
        let (code, out) = capture(&[cmd, "--help"]);
        assert_eq!(code, EXIT_OK, "{cmd}");
        assert_golden(&format!("{cmd}.help"), &out);
    }
}

#[test]
fn every_command_lists_each_config_flag_with_default() {
    for cmd in COMMANDS {
        let (_, out) = capture(&[cmd, "--help"]);
        for key in uqkit::config::KEYS {
            let flag = format!("--{}", key.name.replace('_', "-"));
            let line = out
                .lines()
                .find(|l| l.trim_start().starts_with(&format!("{flag} ")))
                .unwrap_or_else(|| panic!("{cmd}: {flag} missing"));
            assert!(line.contains("[default: "), "{cmd}: {flag} has no default");
        }
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(capture(&[]).0, EXIT_USAGE);
    assert_eq!(capture(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(capture(&["eval", "--no-such-flag"]).0, EXIT_USAGE);
    assert_eq!(capture(&["eval", "--p-d", "1.5"]).0, EXIT_USAGE);
    assert_eq!(capture(&["eval", "--lambda", "-1"]).0, EXIT_USAGE);
    assert_eq!(capture(&["eval", "--groups", "VI"]).0, EXIT_USAGE);
}

#[test]
fn bad_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "no_such_key = 3\n").unwrap();
    assert_eq!(
        capture(&["eval", "--config", cfg.to_str().unwrap()]).0,
        EXIT_USAGE
    );
}

#[test]
fn missing_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let (code, out) = capture(&["extract", "--data-dir", d, "--out-dir", d]);
    assert_eq!(code, EXIT_DATA);
    assert!(out.is_empty(), "nothing on stdout after a failure");
}

#[test]
fn eval_without_gold_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir_all(&data).unwrap();
    fs::write(
        data.join("dev.records.jsonl"),
        "{\"id\":\"a\",\"src\":\"x y\",\"mt\":\"p q\",\"step_logprobs\":[-0.1,-0.2]}\n\
         {\"id\":\"b\",\"src\":\"x z\",\"mt\":\"p r\",\"step_logprobs\":[-0.3,-0.2]}\n",
    )
    .unwrap();
    let d = data.to_str().unwrap();
    let o = dir.path().join("out");
    let o = o.to_str().unwrap();
    let (code, _) = capture(&[
        "extract",
        "--split",
        "dev",
        "--groups",
        "I",
        "--data-dir",
        d,
        "--out-dir",
        o,
    ]);
    assert_eq!(code, EXIT_OK);
    let (code, out) = capture(&[
        "eval",
        "--split",
        "dev",
        "--groups",
        "I",
        "--data-dir",
        d,
        "--out-dir",
        o,
    ]);
    assert_eq!(code, EXIT_DATA);
    assert!(out.is_empty());
}

#[test]
fn pipeline_prints_key_value_lines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("data");
    let o = dir.path().join("out");
    let (d, o) = (d.to_str().unwrap(), o.to_str().unwrap());
    let common = [
        "--data-dir",
        d,
        "--out-dir",
        o,
        "--n-train",
        "60",
        "--n-dev",
        "30",
        "--n-test",
        "30",
        "--corpus-size",
        "50",
        "--mc-samples",
        "4",
        "--groups",
        "I,II",
    ];
    let step = |args: &[&str]| {
        let mut all = args.to_vec();
        all.extend_from_slice(&common);
        let (code, out) = capture(&all);
        assert_eq!(code, EXIT_OK, "{args:?}");
        for line in out.lines() {
            assert!(
                line.split_once('=').is_some(),
                "{args:?}: stray output {line:?}"
            );
        }
        out
    };
    step(&["synth"]);
    for split in ["train", "dev", "test"] {
        step(&["extract", "--split", split]);
    }
    assert!(step(&["train"]).contains("pearson="));
    assert!(step(&["predict"]).contains("rows=30"));
    assert!(step(&["eval"]).contains("feature="));
    assert!(step(&["report"]).contains("k="));
    let preds = fs::read_to_string(Path::new(o).join("test.predictions.csv")).unwrap();
    assert_eq!(preds.lines().next(), Some("id,prediction"));
    assert_eq!(preds.lines().count(), 31);
}

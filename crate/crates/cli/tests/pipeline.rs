use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use skillscout_cli::commands::count_sessions;

fn skillscout(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_skillscout"));
    cmd.args(args).env_remove("SKILLSCOUT_CONFIG").env("RUST_LOG", "warn");
    if let Some(c) = config {
        cmd.env("SKILLSCOUT_CONFIG", c);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|v| v.trim().parse().ok()))
        .unwrap_or_else(|| panic!("no `{key}` in {text}"))
}

const SMALL: &str = r#"
format_version = 1
[catalog]
skills = 200
roots = 6
categories = 24
[intent_model]
epochs = 3
[train]
total_steps = 1200
eval_interval = 600
eval_episodes = 40
"#;

fn small_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("skillscout.toml");
    std::fs::write(&p, SMALL).unwrap();
    p
}

#[test]
fn unknown_subcommand_prints_usage() {
    let o = skillscout(&["frobnicate"], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = skillscout(&["evaluate", "--policy", "rule", "--bogus"], None);
    assert!(!o.status.success());
}

#[test]
fn evaluate_rule_policy() {
    let out = stdout(&skillscout(&["evaluate", "--policy", "rule", "--episodes", "500", "--seed", "1"], None));
    let rate = field(&out, "success_rate");
    assert!((0.0..=1.0).contains(&rate));
    assert!(field(&out, "avg_dialog_length") >= 1.0);
    assert_eq!(field(&out, "episodes"), 500.0);
}

#[test]
fn full_pipeline_consumes_its_own_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    stdout(&skillscout(&["generate-catalog", "--seed", "4", "--out", &p("catalog.json")], Some(&cfg)));
    let boot = ["bootstrap-logs", "--seed", "2", "--catalog", &p("catalog.json"), "--episodes", "400"];
    stdout(&skillscout(&[&boot[..], &["--out", &p("logs.jsonl")]].concat(), Some(&cfg)));
    stdout(&skillscout(&[&boot[..], &["--out", &p("again.jsonl")]].concat(), Some(&cfg)));
    assert_eq!(std::fs::read(p("logs.jsonl")).unwrap(), std::fs::read(p("again.jsonl")).unwrap());
    assert_eq!(count_sessions(Path::new(&p("logs.jsonl"))).unwrap(), 400);

    let sim = stdout(&skillscout(
        &["train-sim", "--seed", "1", "--logs", &p("logs.jsonl"), "--out", &p("model.json")],
        Some(&cfg),
    ));
    assert!(field(&sim, "held_out_perplexity") < 18.0);

    let rl = stdout(&skillscout(
        &[
            "train-rl", "--seed", "3", "--catalog", &p("catalog.json"), "--intent-model", &p("model.json"),
            "--out", &p("policy.json"), "--stats", &p("stats.tsv"),
        ],
        Some(&cfg),
    ));
    assert!(rl.starts_with("seed\tstep\tsuccess_rate"));
    assert_eq!(std::fs::read_to_string(p("stats.tsv")).unwrap().lines().count(), 3);

    let eval = stdout(&skillscout(
        &[
            "evaluate", "--policy", "rl", "--checkpoint", &p("policy.json"), "--catalog", &p("catalog.json"),
            "--intent-model", &p("model.json"), "--episodes", "50",
        ],
        Some(&cfg),
    ));
    assert!(eval.contains("policy rl"));

    // A checkpoint does not fit a catalog of another shape.
    let o = skillscout(&["evaluate", "--policy", "rl", "--checkpoint", &p("policy.json")], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("categories"));
}

#[test]
fn bootstrap_writes_one_session_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("boot.jsonl");
    stdout(&skillscout(
        &["bootstrap-logs", "--episodes", "20000", "--seed", "5", "--out", out.to_str().unwrap()],
        None,
    ));
    assert!(count_sessions(&out).unwrap() >= 20_000);
}

#[test]
fn rl_without_checkpoint_fails() {
    let o = skillscout(&["evaluate", "--policy", "rl", "--episodes", "5"], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("checkpoint"));
}

#[test]
fn chat_until_stop() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_skillscout"))
        .args(["chat", "--policy", "rule"])
        .env("SKILLSCOUT_CONFIG", &cfg)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"help\nstop\n").unwrap();
    let out = stdout(&child.wait_with_output().unwrap());
    assert!(out.contains("[help -> execute]"), "{out}");
    assert!(out.contains("session Ended, reward -1"), "{out}");
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "format_version = 9\n").unwrap();
    let o = skillscout(&["evaluate", "--policy", "rule", "--config", cfg.to_str().unwrap()], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("format_version"));
}

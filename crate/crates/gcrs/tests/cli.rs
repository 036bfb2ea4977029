//! Exercises the `gcrs` binary end to end: every subcommand, the output
//! layout a training run leaves behind, and the exit-code contract
//! (0 success, 2 usage or config errors, 3 unreachable goals).

use std::path::Path;
use std::process::{Command, Output};

use gcrs::harness::EVAL_REPORT_HEADER;
use gcrs::shaping::METRICS_HEADER;
use gcrs::world::parse_map;

fn gcrs(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gcrs"));
    cmd.args(args);
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary launches")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TRAIN_CONFIG: &str = r#"name = "smoke"

[task]
family = "umaze"
difficulty = 2

[mode]
abstraction = "grid"
shaping = true
subgoal_conditioning = true

[train]
n_env_steps = 1024
workers = 2
rollout_len = 256
eval_episodes = 4
seeds = [0]
"#;

#[test]
fn train_then_inspect_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("smoke.toml");
    std::fs::write(&cfg, TRAIN_CONFIG).unwrap();

    let out = run(gcrs(&["train"]).arg(&cfg).env("GCRS_OUT", tmp.path()));
    assert_eq!(out.status.code(), Some(0), "train: {}", stderr(&out));

    let root = tmp.path().join("smoke");
    let seed = root.join("seed_0");
    for file in ["metrics.csv", "eval.csv", "final.ckpt"] {
        assert!(seed.join(file).exists(), "missing {file}");
    }
    assert!(root.join("manifest.json").exists());

    let metrics = std::fs::read_to_string(seed.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with(METRICS_HEADER));
    assert!(metrics.lines().count() > 1, "no metrics rows");

    let ckpt = seed.join("final.ckpt");
    let out = run(gcrs(&["describe-checkpoint"]).arg(&ckpt));
    assert_eq!(out.status.code(), Some(0), "describe: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("grid"), "describe output names the abstraction: {text}");

    let out = run(gcrs(&["plot-data"]).arg(&root));
    assert_eq!(out.status.code(), Some(0), "plot-data: {}", stderr(&out));
    assert!(root.join("aggregate.csv").exists());

    let out = run(&mut gcrs(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--family",
        "umaze",
        "--difficulty",
        "2",
        "--episodes",
        "2",
        "--seed",
        "1",
    ]));
    assert_eq!(out.status.code(), Some(0), "eval: {}", stderr(&out));
    assert!(stdout(&out).starts_with(EVAL_REPORT_HEADER));
}

#[test]
fn gen_map_emits_parseable_text() {
    let out = run(&mut gcrs(&[
        "gen-map",
        "--family",
        "lava-crossing",
        "--difficulty",
        "2",
        "--seed",
        "3",
    ]));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let spec = parse_map(text.trim_end()).expect("generated map parses back");
    assert!(text.contains('A') && text.contains('G'));
    assert!(spec.width >= 5);
}

#[test]
fn plan_debug_prints_values_for_each_abstraction() {
    let tmp = tempfile::tempdir().unwrap();
    let map = tmp.path().join("split.map");
    std::fs::write(&map, ".{rK}.W..\n...W..\n...{rD}..\n...W..\n...W..\nA..W.G").unwrap();

    let out = run(gcrs(&["plan-debug"]).arg(&map));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("value:"), "report shows plan values: {text}");
    assert!(text.contains("grid") && text.contains("room"));
}

#[test]
fn unreachable_goal_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let map = tmp.path().join("walled.map");
    std::fs::write(&map, "A.W.G").unwrap();

    let out = run(gcrs(&["plan-debug"]).arg(&map));
    assert_eq!(out.status.code(), Some(3), "{}{}", stdout(&out), stderr(&out));
}

#[test]
fn invalid_mode_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(
        &cfg,
        r#"name = "bad"

[task]
family = "umaze"
difficulty = 2

[mode]
abstraction = "none"
shaping = true
subgoal_conditioning = false

[train]
n_env_steps = 1024
seeds = [0]
"#,
    )
    .unwrap();

    let out = run(gcrs(&["train"]).arg(&cfg).env("GCRS_OUT", tmp.path()));
    assert_eq!(out.status.code(), Some(2), "{}{}", stdout(&out), stderr(&out));
}

#[test]
fn missing_config_exits_2() {
    let out = run(gcrs(&["train"]).arg(Path::new("/nonexistent/run.toml")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_exits_2() {
    let out = run(&mut gcrs(&["frobnicate"]));
    assert_eq!(out.status.code(), Some(2));
}

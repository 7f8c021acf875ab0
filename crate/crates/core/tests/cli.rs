use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{"envs":["fruit-tree-d2"],"seeds":[0,1],"pipeline":{"steps":10,
"pcn":{"episodes":300,"stride":50,"sequences":4},"denoiser":{"steps":50},"crl":{"steps":30},
"reverse":{"n_samples":4}}}"#;

fn lacadm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lacadm")).current_dir(dir).args(args).output().unwrap()
}

fn ok(out: &Output) -> bool {
    if !out.status.success() {
        eprintln!("stdout:\n{}\nstderr:\n{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    }
    out.status.success()
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = lacadm(dir.path(), &["--help"]);
    assert!(ok(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["collect", "fit-schedule", "train", "generate", "evaluate", "ablate", "heatmap", "report"] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
}

#[test]
fn staged_pipeline_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("tiny.json"), TINY).unwrap();
    let cfg = ["--config", "tiny.json", "--seed", "3"];
    let with = |extra: &[&'static str]| [&cfg[..], extra].concat();

    assert!(ok(&lacadm(d, &with(&["--out", "data", "collect", "--env", "fruit-tree-d2"]))));
    assert!(d.join("data/pcn-metrics.json").is_file());
    assert!(ok(&lacadm(d, &with(&["--out", "sched", "fit-schedule", "--env", "fruit-tree-d2", "--data", "data"]))));
    assert!(d.join("sched/schedule.json").is_file());
    assert!(ok(&lacadm(d, &with(&["--out", "model", "train", "--env", "fruit-tree-d2", "--data", "data"]))));
    assert!(ok(&lacadm(d, &with(&["--out", "report.json", "generate", "--env", "fruit-tree-d2", "--checkpoint", "model", "--samples", "3"]))));
    let out = lacadm(d, &with(&["evaluate", "--env", "fruit-tree-d2", "--report", "report.json"]));
    assert!(ok(&out));
    let record: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(record["method"], "lacadm");
    assert_eq!(record["seed"], 3);
}

#[test]
fn grid_then_report_rebuilds_the_same_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("tiny.json"), TINY).unwrap();
    assert!(ok(&lacadm(d, &["--config", "tiny.json", "--out", "res", "--workers", "1", "evaluate"])));
    let first = fs::read_to_string(d.join("res/results.csv")).unwrap();
    assert_eq!(first.lines().count(), 4);

    fs::write(d.join("ext.json"), r#"[{"env":"fruit-tree-d2","method":"published","hv":1.0,"sparsity":null,"source":"reported"}]"#).unwrap();
    let out = lacadm(d, &["--config", "tiny.json", "--out", "res", "report", "--external", "ext.json"]);
    assert!(ok(&out));
    assert_eq!(fs::read_to_string(d.join("res/results.csv")).unwrap(), first);
    let table: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("res/results.json")).unwrap()).unwrap();
    assert_eq!(table["external"][0]["method"], "published");
}

#[test]
fn failures_give_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(!lacadm(d, &["--out", "x", "collect", "--env", "no-such-env"]).status.success());
    fs::write(d.join("broken.json"), TINY.replace(r#""crl":{"steps":30}"#, r#""crl":{"steps":30,"latent_dim":0}"#)).unwrap();
    let out = lacadm(d, &["--config", "broken.json", "--out", "res", "evaluate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAILED"));
    assert!(d.join("res/errors.json").is_file());
}
